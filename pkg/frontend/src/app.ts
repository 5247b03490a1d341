/**
 * Browser UI: join form, live message feed, roster, composer.
 *
 * Served by the chat service under /app, so all requests are same-origin.
 */

import { ChatClient, MessageRecord, PollLoop, messageBadge } from "./client.js";

const SERVICE_URL = "";
const POLL_WAIT_MS = 25_000;
const ROSTER_REFRESH_MS = 15_000;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

const joinSection = el<HTMLElement>("join-section");
const chatSection = el<HTMLElement>("chat-section");
const joinForm = el<HTMLFormElement>("join-form");
const joinError = el<HTMLElement>("join-error");
const roomInput = el<HTMLInputElement>("room-input");
const nameInput = el<HTMLInputElement>("name-input");
const roomLabel = el<HTMLElement>("room-label");
const offlineBanner = el<HTMLElement>("offline-banner");
const messageList = el<HTMLElement>("message-list");
const rosterList = el<HTMLElement>("roster-list");
const composerForm = el<HTMLFormElement>("composer-form");
const composerInput = el<HTMLInputElement>("composer-input");

function renderMessage(record: MessageRecord): HTMLElement {
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

function appendMessages(records: MessageRecord[]): void {
  const atBottom =
    messageList.scrollHeight - messageList.scrollTop - messageList.clientHeight < 40;
  for (const record of records) {
    messageList.appendChild(renderMessage(record));
  }
  if (atBottom) messageList.scrollTop = messageList.scrollHeight;
}

async function refreshRoster(client: ChatClient): Promise<void> {
  try {
    const roster = await client.roster();
    rosterList.replaceChildren(
      ...roster.map((participant) => {
        const item = document.createElement("li");
        item.textContent = participant.display_name;
        item.title = participant.author;
        return item;
      }),
    );
  } catch {
    // transient; the poll loop owns connection state reporting
  }
}

function storedAuthor(roomId: string, displayName: string): string | undefined {
  return sessionStorage.getItem(`author:${roomId}:${displayName}`) ?? undefined;
}

function storeAuthor(client: ChatClient): void {
  sessionStorage.setItem(`author:${client.roomId}:${client.displayName}`, client.author);
}

async function joinRoom(roomId: string, displayName: string): Promise<void> {
  joinError.textContent = "";
  let client: ChatClient;
  try {
    client = await ChatClient.join({
      serviceUrl: SERVICE_URL,
      roomId,
      displayName,
      author: storedAuthor(roomId, displayName),
    });
  } catch (error) {
    if (error instanceof TypeError) {
      joinError.textContent = "service unreachable — is the chat service running?";
    } else if ((error as { status?: number }).status === 404) {
      joinError.textContent = `room not found: ${roomId}`;
    } else {
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
    if (!body) return;
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
  if (roomId && displayName) void joinRoom(roomId, displayName);
});

const params = new URLSearchParams(window.location.search);
const presetRoom = params.get("room");
const presetName = params.get("name");
if (presetRoom) roomInput.value = presetRoom;
if (presetName) nameInput.value = presetName;
if (presetRoom && presetName) void joinRoom(presetRoom, presetName);
