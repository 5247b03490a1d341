/**
 * Room-session logic for the chat service wire protocol.
 *
 * Framework-free and DOM-free so it can be unit-tested directly: the UI
 * layer (app.ts) only renders what this module produces. The one piece of
 * client state that matters for correctness is lastSeenSeq; everything
 * else can be rebuilt from the server at any time.
 */

export interface MessageRecord {
  seq: number;
  author: string;
  body: string;
  ts_ms: number;
  origin: "human" | "agent";
  feature_tag: string | null;
  idempotency_key: string | null;
}

export interface Participant {
  author: string;
  display_name: string;
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

// Unbound `fetch` references throw "Illegal invocation" in browsers, so the
// default goes through a wrapper.
const defaultFetch: FetchLike = (url, init) => fetch(url, init);

export class ServiceError extends Error {
  constructor(
    public readonly status: number,
    public readonly code: string,
    detail: string,
  ) {
    super(`${code}: ${detail}`);
    this.name = "ServiceError";
  }
}

async function request(
  fetchImpl: FetchLike,
  url: string,
  init?: RequestInit,
): Promise<unknown> {
  const response = await fetchImpl(url, init);
  if (!response.ok) {
    let code = `HTTP ${response.status}`;
    let detail = response.statusText;
    try {
      const body = (await response.json()) as { error?: string; detail?: string };
      code = body.error ?? code;
      detail = body.detail ?? detail;
    } catch {
      // non-JSON error body; keep the status text
    }
    throw new ServiceError(response.status, code, detail);
  }
  return response.json();
}

function postJson(payload: unknown): RequestInit {
  return {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify(payload),
  };
}

/** Stable-enough author id derived from a display name, unique per tab. */
export function authorSlug(displayName: string): string {
  const base = displayName
    .toLowerCase()
    .replace(/[^a-z0-9]+/g, "-")
    .replace(/^-+|-+$/g, "");
  const suffix = Math.random().toString(36).slice(2, 6);
  return `${base || "guest"}-${suffix}`;
}

/** Badge text for a rendered message, or null for plain human messages. */
export function messageBadge(record: MessageRecord): string | null {
  if (record.origin !== "agent") return null;
  return record.feature_tag ?? "agent";
}

export async function createRoom(
  serviceUrl: string,
  roomId: string,
  agentAuthor?: string,
  fetchImpl: FetchLike = defaultFetch,
): Promise<void> {
  await request(
    fetchImpl,
    `${serviceUrl}/rooms`,
    postJson({ room_id: roomId, agent_author: agentAuthor ?? null }),
  );
}

export async function listRooms(
  serviceUrl: string,
  fetchImpl: FetchLike = defaultFetch,
): Promise<string[]> {
  return (await request(fetchImpl, `${serviceUrl}/rooms`)) as string[];
}

export interface JoinOptions {
  serviceUrl: string;
  roomId: string;
  displayName: string;
  author?: string;
  fetchImpl?: FetchLike;
}

export class ChatClient {
  readonly serviceUrl: string;
  readonly roomId: string;
  readonly author: string;
  readonly displayName: string;

  /** High-water mark of rendered messages; never decreases. */
  lastSeenSeq = -1;
  /** Gap-free prefix of the room's log, in seq order. */
  readonly messages: MessageRecord[] = [];

  private readonly fetchImpl: FetchLike;

  private constructor(opts: Required<Omit<JoinOptions, "fetchImpl">> & { fetchImpl: FetchLike }) {
    this.serviceUrl = opts.serviceUrl;
    this.roomId = opts.roomId;
    this.displayName = opts.displayName;
    this.author = opts.author;
    this.fetchImpl = opts.fetchImpl;
  }

  /** Join a room and load its history from seq 0. */
  static async join(opts: JoinOptions): Promise<ChatClient> {
    const client = new ChatClient({
      serviceUrl: opts.serviceUrl.replace(/\/+$/, ""),
      roomId: opts.roomId,
      displayName: opts.displayName,
      author: opts.author ?? authorSlug(opts.displayName),
      fetchImpl: opts.fetchImpl ?? defaultFetch,
    });
    await request(
      client.fetchImpl,
      `${client.serviceUrl}/rooms/${client.roomId}/join`,
      postJson({ author: client.author, display_name: client.displayName }),
    );
    await client.pull(0);
    return client;
  }

  private messagesUrl(afterSeq: number, waitMs: number): string {
    return (
      `${this.serviceUrl}/rooms/${this.roomId}/messages` +
      `?after_seq=${afterSeq}&wait_ms=${waitMs}`
    );
  }

  /**
   * Fetch anything newer than lastSeenSeq (long-polling up to waitMs) and
   * integrate it. Returns the newly appended records.
   */
  async pull(waitMs: number): Promise<MessageRecord[]> {
    const records = (await request(
      this.fetchImpl,
      this.messagesUrl(this.lastSeenSeq, waitMs),
    )) as MessageRecord[];
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
  private integrate(records: MessageRecord[]): MessageRecord[] | null {
    const appended: MessageRecord[] = [];
    for (const record of records) {
      if (record.seq <= this.lastSeenSeq) continue;
      if (record.seq !== this.lastSeenSeq + 1) return null;
      this.messages.push(record);
      this.lastSeenSeq = record.seq;
      appended.push(record);
    }
    return appended;
  }

  /** Rebuild the whole view from seq 0; lastSeenSeq still never decreases. */
  private async resync(): Promise<MessageRecord[]> {
    const records = (await request(
      this.fetchImpl,
      this.messagesUrl(-1, 0),
    )) as MessageRecord[];
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
  async send(body: string): Promise<MessageRecord> {
    return (await request(
      this.fetchImpl,
      `${this.serviceUrl}/rooms/${this.roomId}/messages`,
      postJson({ author: this.author, body, origin: "human" }),
    )) as MessageRecord;
  }

  async roster(): Promise<Participant[]> {
    return (await request(
      this.fetchImpl,
      `${this.serviceUrl}/rooms/${this.roomId}/participants`,
    )) as Participant[];
  }
}

export interface PollLoopOptions {
  waitMs?: number;
  retryBaseMs?: number;
  retryMaxMs?: number;
  offlineAfter?: number;
  onMessages: (appended: MessageRecord[]) => void;
  onConnectionChange?: (online: boolean) => void;
}

export function backoffDelayMs(attempt: number, baseMs = 500, maxMs = 10_000): number {
  return Math.min(baseMs * 2 ** attempt, maxMs);
}

/**
 * Drives pull() forever: long-poll while healthy, exponential backoff on
 * transient failures, and an offline signal once failures persist.
 */
export class PollLoop {
  private stopped = false;
  private failures = 0;

  constructor(
    private readonly client: ChatClient,
    private readonly opts: PollLoopOptions,
  ) {}

  stop(): void {
    this.stopped = true;
  }

  async run(): Promise<void> {
    const waitMs = this.opts.waitMs ?? 25_000;
    const offlineAfter = this.opts.offlineAfter ?? 3;
    while (!this.stopped) {
      try {
        const appended = await this.client.pull(waitMs);
        if (this.failures >= offlineAfter) this.opts.onConnectionChange?.(true);
        this.failures = 0;
        if (appended.length > 0) this.opts.onMessages(appended);
      } catch (error) {
        if (this.stopped) return;
        this.failures += 1;
        if (this.failures === offlineAfter) this.opts.onConnectionChange?.(false);
        const delay = backoffDelayMs(
          this.failures - 1,
          this.opts.retryBaseMs ?? 500,
          this.opts.retryMaxMs ?? 10_000,
        );
        await new Promise((resolve) => setTimeout(resolve, delay));
      }
    }
  }
}
