/**
 * Room-session logic for the chat service wire protocol.
 *
 * Framework-free and DOM-free so it can be unit-tested directly: the UI
 * layer (app.ts) only renders what this module produces. The one piece of
 * client state that matters for correctness is lastSeenSeq; everything
 * else can be rebuilt from the server at any time.
 */
// Unbound `fetch` references throw "Illegal invocation" in browsers, so the
// default goes through a wrapper.
const defaultFetch = (url, init) => fetch(url, init);
export class ServiceError extends Error {
    constructor(status, code, detail) {
        super(`${code}: ${detail}`);
        this.status = status;
        this.code = code;
        this.name = "ServiceError";
    }
}
async function request(fetchImpl, url, init) {
    const response = await fetchImpl(url, init);
    if (!response.ok) {
        let code = `HTTP ${response.status}`;
        let detail = response.statusText;
        try {
            const body = (await response.json());
            code = body.error ?? code;
            detail = body.detail ?? detail;
        }
        catch {
            // non-JSON error body; keep the status text
        }
        throw new ServiceError(response.status, code, detail);
    }
    return response.json();
}
function postJson(payload) {
    return {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(payload),
    };
}
/** Stable-enough author id derived from a display name, unique per tab. */
export function authorSlug(displayName) {
    const base = displayName
        .toLowerCase()
        .replace(/[^a-z0-9]+/g, "-")
        .replace(/^-+|-+$/g, "");
    const suffix = Math.random().toString(36).slice(2, 6);
    return `${base || "guest"}-${suffix}`;
}
/** Badge text for a rendered message, or null for plain human messages. */
export function messageBadge(record) {
    if (record.origin !== "agent")
        return null;
    return record.feature_tag ?? "agent";
}
export async function createRoom(serviceUrl, roomId, agentAuthor, fetchImpl = defaultFetch) {
    await request(fetchImpl, `${serviceUrl}/rooms`, postJson({ room_id: roomId, agent_author: agentAuthor ?? null }));
}
export async function listRooms(serviceUrl, fetchImpl = defaultFetch) {
    return (await request(fetchImpl, `${serviceUrl}/rooms`));
}
export class ChatClient {
    constructor(opts) {
        /** High-water mark of rendered messages; never decreases. */
        this.lastSeenSeq = -1;
        /** Gap-free prefix of the room's log, in seq order. */
        this.messages = [];
        this.serviceUrl = opts.serviceUrl;
        this.roomId = opts.roomId;
        this.displayName = opts.displayName;
        this.author = opts.author;
        this.fetchImpl = opts.fetchImpl;
    }
    /** Join a room and load its history from seq 0. */
    static async join(opts) {
        const client = new ChatClient({
            serviceUrl: opts.serviceUrl.replace(/\/+$/, ""),
            roomId: opts.roomId,
            displayName: opts.displayName,
            author: opts.author ?? authorSlug(opts.displayName),
            fetchImpl: opts.fetchImpl ?? defaultFetch,
        });
        await request(client.fetchImpl, `${client.serviceUrl}/rooms/${client.roomId}/join`, postJson({ author: client.author, display_name: client.displayName }));
        await client.pull(0);
        return client;
    }
    messagesUrl(afterSeq, waitMs) {
        return (`${this.serviceUrl}/rooms/${this.roomId}/messages` +
            `?after_seq=${afterSeq}&wait_ms=${waitMs}`);
    }
    /**
     * Fetch anything newer than lastSeenSeq (long-polling up to waitMs) and
     * integrate it. Returns the newly appended records.
     */
    async pull(waitMs) {
        const records = (await request(this.fetchImpl, this.messagesUrl(this.lastSeenSeq, waitMs)));
        const appended = this.integrate(records);
        if (appended === null) {
            return this.resync();
        }
        return appended;
    }
    /**
     * Append records that extend the gap-free prefix. Duplicates and
     * already-seen records are dropped; a gap aborts with null so the caller
     * can resync from scratch.
     */
    integrate(records) {
        const appended = [];
        for (const record of records) {
            if (record.seq <= this.lastSeenSeq)
                continue;
            if (record.seq !== this.lastSeenSeq + 1)
                return null;
            this.messages.push(record);
            this.lastSeenSeq = record.seq;
            appended.push(record);
        }
        return appended;
    }
    /** Rebuild the whole view from seq 0; lastSeenSeq still never decreases. */
    async resync() {
        const records = (await request(this.fetchImpl, this.messagesUrl(-1, 0)));
        const previousSeen = this.lastSeenSeq;
        this.messages.length = 0;
        this.lastSeenSeq = -1;
        const appended = this.integrate(records);
        if (appended === null || this.lastSeenSeq < previousSeen) {
            throw new ServiceError(500, "ResyncFailed", "server returned an inconsistent log");
        }
        return this.messages.slice();
    }
    /** Post one human message through the composer. */
    async send(body) {
        return (await request(this.fetchImpl, `${this.serviceUrl}/rooms/${this.roomId}/messages`, postJson({ author: this.author, body, origin: "human" })));
    }
    async roster() {
        return (await request(this.fetchImpl, `${this.serviceUrl}/rooms/${this.roomId}/participants`));
    }
}
export function backoffDelayMs(attempt, baseMs = 500, maxMs = 10000) {
    return Math.min(baseMs * 2 ** attempt, maxMs);
}
/**
 * Drives pull() forever: long-poll while healthy, exponential backoff on
 * transient failures, and an offline signal once failures persist.
 */
export class PollLoop {
    constructor(client, opts) {
        this.client = client;
        this.opts = opts;
        this.stopped = false;
        this.failures = 0;
    }
    stop() {
        this.stopped = true;
    }
    async run() {
        const waitMs = this.opts.waitMs ?? 25000;
        const offlineAfter = this.opts.offlineAfter ?? 3;
        while (!this.stopped) {
            try {
                const appended = await this.client.pull(waitMs);
                if (this.failures >= offlineAfter)
                    this.opts.onConnectionChange?.(true);
                this.failures = 0;
                if (appended.length > 0)
                    this.opts.onMessages(appended);
            }
            catch (error) {
                if (this.stopped)
                    return;
                this.failures += 1;
                if (this.failures === offlineAfter)
                    this.opts.onConnectionChange?.(false);
                const delay = backoffDelayMs(this.failures - 1, this.opts.retryBaseMs ?? 500, this.opts.retryMaxMs ?? 10000);
                await new Promise((resolve) => setTimeout(resolve, delay));
            }
        }
    }
}
