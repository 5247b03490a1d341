/**
 * Browser UI: join form, live message feed, roster, composer.
 *
 * Served by the chat service under /app, so all requests are same-origin.
 */
import { ChatClient, PollLoop, messageBadge } from "./client.js";
const SERVICE_URL = "";
const POLL_WAIT_MS = 25000;
const ROSTER_REFRESH_MS = 15000;
function el(id) {
    const node = document.getElementById(id);
    if (!node)
        throw new Error(`missing element #${id}`);
    return node;
}
const joinSection = el("join-section");
const chatSection = el("chat-section");
const joinForm = el("join-form");
const joinError = el("join-error");
const roomInput = el("room-input");
const nameInput = el("name-input");
const roomLabel = el("room-label");
const offlineBanner = el("offline-banner");
const messageList = el("message-list");
const rosterList = el("roster-list");
const composerForm = el("composer-form");
const composerInput = el("composer-input");
function renderMessage(record) {
    const item = document.createElement("article");
    item.className = record.origin === "agent" ? "message agent" : "message";
    item.dataset.seq = String(record.seq);
    const meta = document.createElement("header");
    const author = document.createElement("span");
    author.className = "author";
    author.textContent = record.author;
    meta.appendChild(author);
    const badge = messageBadge(record);
    if (badge !== null) {
        const tag = document.createElement("span");
        tag.className = "badge";
        tag.textContent = badge;
        meta.appendChild(tag);
    }
    const time = document.createElement("time");
    time.textContent = new Date(record.ts_ms).toLocaleTimeString();
    meta.appendChild(time);
    item.appendChild(meta);
    const body = document.createElement("p");
    body.textContent = record.body;
    item.appendChild(body);
    return item;
}
function appendMessages(records) {
    const atBottom = messageList.scrollHeight - messageList.scrollTop - messageList.clientHeight < 40;
    for (const record of records) {
        messageList.appendChild(renderMessage(record));
    }
    if (atBottom)
        messageList.scrollTop = messageList.scrollHeight;
}
async function refreshRoster(client) {
    try {
        const roster = await client.roster();
        rosterList.replaceChildren(...roster.map((participant) => {
            const item = document.createElement("li");
            item.textContent = participant.display_name;
            item.title = participant.author;
            return item;
        }));
    }
    catch {
        // transient; the poll loop owns connection state reporting
    }
}
function storedAuthor(roomId, displayName) {
    return sessionStorage.getItem(`author:${roomId}:${displayName}`) ?? undefined;
}
function storeAuthor(client) {
    sessionStorage.setItem(`author:${client.roomId}:${client.displayName}`, client.author);
}
async function joinRoom(roomId, displayName) {
    joinError.textContent = "";
    let client;
    try {
        client = await ChatClient.join({
            serviceUrl: SERVICE_URL,
            roomId,
            displayName,
            author: storedAuthor(roomId, displayName),
        });
    }
    catch (error) {
        if (error instanceof TypeError) {
            joinError.textContent = "service unreachable — is the chat service running?";
        }
        else if (error.status === 404) {
            joinError.textContent = `room not found: ${roomId}`;
        }
        else {
            joinError.textContent = String(error);
        }
        return;
    }
    storeAuthor(client);
    const url = new URL(window.location.href);
    url.searchParams.set("room", roomId);
    url.searchParams.set("name", displayName);
    window.history.replaceState(null, "", url.toString());
    joinSection.hidden = true;
    chatSection.hidden = false;
    roomLabel.textContent = roomId;
    appendMessages(client.messages);
    void refreshRoster(client);
    setInterval(() => void refreshRoster(client), ROSTER_REFRESH_MS);
    const loop = new PollLoop(client, {
        waitMs: POLL_WAIT_MS,
        onMessages: appendMessages,
        onConnectionChange: (online) => {
            offlineBanner.hidden = online;
        },
    });
    void loop.run();
    composerForm.addEventListener("submit", (event) => {
        event.preventDefault();
        const body = composerInput.value.trim();
        if (!body)
            return;
        composerInput.value = "";
        client.send(body).catch(() => {
            composerInput.value = body; // let the author retry
            offlineBanner.hidden = false;
        });
    });
    composerInput.focus();
}
joinForm.addEventListener("submit", (event) => {
    event.preventDefault();
    const roomId = roomInput.value.trim();
    const displayName = nameInput.value.trim();
    if (roomId && displayName)
        void joinRoom(roomId, displayName);
});
const params = new URLSearchParams(window.location.search);
const presetRoom = params.get("room");
const presetName = params.get("name");
if (presetRoom)
    roomInput.value = presetRoom;
if (presetName)
    nameInput.value = presetName;
if (presetRoom && presetName)
    void joinRoom(presetRoom, presetName);
