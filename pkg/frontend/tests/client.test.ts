import { describe, expect, test } from "vitest";

import {
  ChatClient,
  PollLoop,
  ServiceError,
  authorSlug,
  backoffDelayMs,
  createRoom,
  listRooms,
  messageBadge,
  type MessageRecord,
} from "../src/client.js";
import { MockService } from "./mock_service.js";

function makeRoomWithHistory(): MockService {
  const service = new MockService();
  service.createRoom("g1", "bot-1");
  return service;
}

async function join(service: MockService, name: string, room = "g1"): Promise<ChatClient> {
  return ChatClient.join({
    serviceUrl: "http://mock",
    roomId: room,
    displayName: name,
    fetchImpl: service.fetch,
  });
}

test("joining an existing room renders the full history from seq 0", async () => {
  const service = makeRoomWithHistory();
  service.createRoom("seeded");
  const seeder = await join(service, "Seeder", "seeded");
  for (let i = 0; i < 5; i++) await seeder.send(`m${i}`);

  const client = await join(service, "Late", "seeded");
  expect(client.messages.map((m) => m.seq)).toEqual([0, 1, 2, 3, 4]);
  expect(client.lastSeenSeq).toBe(4);
});

test("joining an unknown room surfaces NoSuchRoom", async () => {
  const service = makeRoomWithHistory();
  await expect(join(service, "Alice", "nope")).rejects.toMatchObject({
    status: 404,
    code: "NoSuchRoom",
  });
});

test("two tabs joining under different names both appear in the roster", async () => {
  const service = makeRoomWithHistory();
  const alice = await join(service, "Alice");
  const bob = await join(service, "Bob");
  const roster = await alice.roster();
  const names = roster.map((p) => p.display_name).sort();
  expect(names).toEqual(["Alice", "Bob"]);
  expect(alice.author).not.toBe(bob.author);
});

test("a posted message reaches every joined client", async () => {
  const service = makeRoomWithHistory();
  const alice = await join(service, "Alice");
  const bob = await join(service, "Bob");
  await alice.send("hello everyone");
  const bobSees = await bob.pull(0);
  const aliceSees = await alice.pull(0);
  expect(bobSees.map((m) => m.body)).toEqual(["hello everyone"]);
  expect(aliceSees.map((m) => m.body)).toEqual(["hello everyone"]);
});

test("agent messages carry a feature badge, human messages none", () => {
  const agent: MessageRecord = {
    seq: 3,
    author: "bot-1",
    body: "10 minutes remaining.",
    ts_ms: 0,
    origin: "agent",
    feature_tag: "timing",
    idempotency_key: "timing:10",
  };
  expect(messageBadge(agent)).toBe("timing");
  expect(messageBadge({ ...agent, origin: "human", feature_tag: null })).toBeNull();
});

test("long-poll delivers a message posted mid-wait", async () => {
  const service = makeRoomWithHistory();
  const alice = await join(service, "Alice");
  const bob = await join(service, "Bob");

  const pending = bob.pull(5_000);
  const started = Date.now();
  setTimeout(() => void alice.send("mid-wait"), 50);
  const got = await pending;
  expect(got.map((m) => m.body)).toEqual(["mid-wait"]);
  expect(Date.now() - started).toBeLessThan(2_000);
});

test("duplicate and already-seen records are dropped", async () => {
  const service = makeRoomWithHistory();
  const alice = await join(service, "Alice");
  await alice.send("one");
  await alice.pull(0);
  const again = await alice.pull(0); // nothing new
  expect(again).toEqual([]);
  expect(alice.messages.map((m) => m.seq)).toEqual([0]);
});

test("a gapped response triggers a resync that stays gap-free", async () => {
  const service = makeRoomWithHistory();
  const alice = await join(service, "Alice");
  await alice.send("zero");
  await alice.pull(0);
  await alice.send("one");
  await alice.send("two");

  let tampered = false;
  const tamperingFetch: typeof service.fetch = async (url, init) => {
    const response = await service.fetch(url, init);
    if (!tampered && String(url).includes("after_seq=0")) {
      tampered = true;
      const records = (await response.json()) as MessageRecord[];
      return new Response(JSON.stringify(records.slice(1)), { status: 200 });
    }
    return response;
  };

  const victim = await ChatClient.join({
    serviceUrl: "http://mock",
    roomId: "g1",
    displayName: "Victim",
    fetchImpl: tamperingFetch,
  });
  // Re-point the victim's view to just after seq 0, then pull the
  // tampered (gapped) batch; the client must fall back to a full resync.
  (victim as unknown as { lastSeenSeq: number }).lastSeenSeq = 0;
  victim.messages.length = 1;
  await victim.pull(0);
  expect(victim.messages.map((m) => m.seq)).toEqual([0, 1, 2]);
});

test("lastSeenSeq never decreases", async () => {
  const service = makeRoomWithHistory();
  const alice = await join(service, "Alice");
  const seen: number[] = [alice.lastSeenSeq];
  for (let i = 0; i < 5; i++) {
    await alice.send(`m${i}`);
    await alice.pull(0);
    seen.push(alice.lastSeenSeq);
  }
  for (let i = 1; i < seen.length; i++) {
    expect(seen[i]!).toBeGreaterThanOrEqual(seen[i - 1]!);
  }
});

test("poll loop reports offline after persistent failures, then recovers", async () => {
  const service = makeRoomWithHistory();
  const alice = await join(service, "Alice");

  let failuresLeft = 3;
  const flakyFetch: typeof service.fetch = async (url, init) => {
    // Only the loop's long-polls (wait_ms=100) fail; the join-time
    // catch-up pull uses wait_ms=0 and stays healthy.
    if (String(url).includes("wait_ms=100") && failuresLeft > 0) {
      failuresLeft -= 1;
      throw new TypeError("network down");
    }
    return service.fetch(url, init);
  };
  const client = await ChatClient.join({
    serviceUrl: "http://mock",
    roomId: "g1",
    displayName: "Flaky",
    fetchImpl: flakyFetch,
  });

  const transitions: boolean[] = [];
  const received: string[] = [];
  const loop = new PollLoop(client, {
    waitMs: 100,
    retryBaseMs: 5,
    offlineAfter: 3,
    onMessages: (records) => received.push(...records.map((m) => m.body)),
    onConnectionChange: (online) => transitions.push(online),
  });
  const running = loop.run();
  await alice.send("after recovery");
  await new Promise((resolve) => setTimeout(resolve, 400));
  loop.stop();
  await Promise.race([running, new Promise((resolve) => setTimeout(resolve, 300))]);

  expect(transitions[0]).toBe(false);
  expect(transitions).toContain(true);
  expect(received).toContain("after recovery");
});

test("backoff delays grow exponentially and cap", () => {
  expect(backoffDelayMs(0, 500, 10_000)).toBe(500);
  expect(backoffDelayMs(1, 500, 10_000)).toBe(1_000);
  expect(backoffDelayMs(3, 500, 10_000)).toBe(4_000);
  expect(backoffDelayMs(10, 500, 10_000)).toBe(10_000);
});

test("authorSlug is url-safe and distinct per call", () => {
  const a = authorSlug("Alice Smith!");
  const b = authorSlug("Alice Smith!");
  expect(a).toMatch(/^alice-smith-[a-z0-9]{4}$/);
  expect(a).not.toBe(b);
});

describe("room helpers", () => {
  test("createRoom then listRooms round-trips", async () => {
    const service = new MockService();
    await createRoom("http://mock", "fresh", "bot-1", service.fetch);
    expect(await listRooms("http://mock", service.fetch)).toEqual(["fresh"]);
  });

  test("duplicate room creation raises RoomExists", async () => {
    const service = makeRoomWithHistory();
    await expect(createRoom("http://mock", "g1", undefined, service.fetch)).rejects.toBeInstanceOf(
      ServiceError,
    );
  });
});
