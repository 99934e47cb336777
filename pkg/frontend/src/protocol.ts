// Wire schema for the teleoperation session, mirrored field for field
// from the server. Messages are JSON objects with a `type` tag, one per
// socket frame or transcript line. The schema is versioned; `hello`
// negotiates it. Decoding is strict: unknown types, unknown fields,
// missing required fields, wrong primitive kinds, and out-of-bounds
// control values are all rejected, exactly like the server side.

export const PROTOCOL_VERSION = 1;

export class ProtocolError extends Error {}

export interface Hello {
  type: "hello";
  role: "server" | "client";
  version: number;
  session: string;
}

export interface SessionConfig {
  type: "config";
  digest: string;
  eta: number;
  window_size: number;
  n_samples: number;
  dt: number;
  hold_budget_ticks: number;
  budget_frames: number;
}

export interface TrackGeometry {
  type: "track";
  episode: number;
  track: Record<string, unknown>;
}

export interface FrameUpdate {
  type: "frame";
  tick: number; // session-global, strictly increasing
  episode: number;
  sim_tick: number;
  x: number;
  y: number;
  heading: number;
  speed: number;
  command: string;
  combined: number;
  window_sum: number;
  eta: number;
  control_mode: string;
  infraction: string | null;
}

export interface ControlInput {
  type: "control";
  tick: number; // latest server tick the client had seen
  steer: number;
  throttle: number;
}

export interface Pause {
  type: "pause";
  reason: string;
}

export interface Resume {
  type: "resume";
}

export interface End {
  type: "end";
  reason: string;
  frames: number;
  episodes: number;
}

export interface ErrorMessage {
  type: "error";
  message: string;
}

export type Message =
  | Hello
  | SessionConfig
  | TrackGeometry
  | FrameUpdate
  | ControlInput
  | Pause
  | Resume
  | End
  | ErrorMessage;

type Kind = "int" | "number" | "string" | "object";

interface FieldSpec {
  kind: Kind;
  // absent means required; a function builds the default lazily
  fallback?: () => unknown;
  nullable?: boolean;
}

const SCHEMAS: Record<Message["type"], Record<string, FieldSpec>> = {
  hello: {
    role: { kind: "string" },
    version: { kind: "int", fallback: () => PROTOCOL_VERSION },
    session: { kind: "string", fallback: () => "" },
  },
  config: {
    digest: { kind: "string" },
    eta: { kind: "number" },
    window_size: { kind: "int" },
    n_samples: { kind: "int" },
    dt: { kind: "number" },
    hold_budget_ticks: { kind: "int" },
    budget_frames: { kind: "int" },
  },
  track: {
    episode: { kind: "int" },
    track: { kind: "object" },
  },
  frame: {
    tick: { kind: "int" },
    episode: { kind: "int" },
    sim_tick: { kind: "int" },
    x: { kind: "number" },
    y: { kind: "number" },
    heading: { kind: "number" },
    speed: { kind: "number" },
    command: { kind: "string" },
    combined: { kind: "number" },
    window_sum: { kind: "number" },
    eta: { kind: "number" },
    control_mode: { kind: "string" },
    infraction: { kind: "string", fallback: () => null, nullable: true },
  },
  control: {
    tick: { kind: "int" },
    steer: { kind: "number" },
    throttle: { kind: "number" },
  },
  pause: {
    reason: { kind: "string", fallback: () => "stale_input" },
  },
  resume: {},
  end: {
    reason: { kind: "string" },
    frames: { kind: "int", fallback: () => 0 },
    episodes: { kind: "int", fallback: () => 0 },
  },
  error: {
    message: { kind: "string" },
  },
};

function kindOk(value: unknown, kind: Kind): boolean {
  switch (kind) {
    case "int":
      return typeof value === "number" && Number.isInteger(value);
    case "number":
      return typeof value === "number" && Number.isFinite(value);
    case "string":
      return typeof value === "string";
    case "object":
      return typeof value === "object" && value !== null && !Array.isArray(value);
  }
}

function checkBounds(msg: Message): void {
  if (msg.type === "control") {
    if (msg.steer < -1 || msg.steer > 1) {
      throw new ProtocolError(`steer out of [-1, 1]: ${msg.steer}`);
    }
    if (msg.throttle < 0 || msg.throttle > 1) {
      throw new ProtocolError(`throttle out of [0, 1]: ${msg.throttle}`);
    }
  }
  if (msg.type === "hello" && msg.role !== "server" && msg.role !== "client") {
    throw new ProtocolError(`hello role must be server|client, got ${msg.role}`);
  }
}

// Canonical JSON: sorted keys, no whitespace, shortest number repr.
// Matches the server's artifact encoding so transcripts diff cleanly.
function canonical(value: unknown): string {
  if (value === null) return "null";
  if (Array.isArray(value)) return "[" + value.map(canonical).join(",") + "]";
  if (typeof value === "object") {
    const rec = value as Record<string, unknown>;
    const keys = Object.keys(rec).sort();
    return "{" + keys.map((k) => JSON.stringify(k) + ":" + canonical(rec[k])).join(",") + "}";
  }
  if (typeof value === "number" && !Number.isFinite(value)) {
    throw new ProtocolError(`non-finite number on the wire: ${value}`);
  }
  return JSON.stringify(value);
}

export function encode(message: Message): string {
  const schema = SCHEMAS[message.type];
  if (schema === undefined) {
    throw new ProtocolError(`not a protocol message: ${(message as { type: string }).type}`);
  }
  checkBounds(message);
  const out: Record<string, unknown> = { type: message.type };
  for (const name of Object.keys(schema)) {
    const value = (message as unknown as Record<string, unknown>)[name];
    if (value === null || value === undefined) continue; // omitted like the server does
    out[name] = value;
  }
  return canonical(out);
}

export function decode(line: string): Message {
  let parsed: unknown;
  try {
    parsed = JSON.parse(line);
  } catch (e) {
    throw new ProtocolError(`not valid JSON: ${(e as Error).message}`);
  }
  if (typeof parsed !== "object" || parsed === null || Array.isArray(parsed)) {
    throw new ProtocolError("message must be an object with a type field");
  }
  const rec = parsed as Record<string, unknown>;
  const typeName = rec["type"];
  if (typeof typeName !== "string" || !(typeName in SCHEMAS)) {
    throw new ProtocolError(`unknown message type ${JSON.stringify(typeName)}`);
  }
  const schema = SCHEMAS[typeName as Message["type"]];
  const out: Record<string, unknown> = { type: typeName };
  for (const [key, value] of Object.entries(rec)) {
    if (key === "type") continue;
    const spec = schema[key];
    if (spec === undefined) {
      throw new ProtocolError(`bad ${typeName} message: unknown field ${key}`);
    }
    if (!kindOk(value, spec.kind)) {
      throw new ProtocolError(`bad ${typeName} message: field ${key} is not ${spec.kind}`);
    }
    out[key] = value;
  }
  for (const [name, spec] of Object.entries(schema)) {
    if (name in out) continue;
    if (spec.fallback === undefined) {
      throw new ProtocolError(`bad ${typeName} message: missing field ${name}`);
    }
    out[name] = spec.fallback();
  }
  const msg = out as unknown as Message;
  checkBounds(msg);
  return msg;
}

// Maximal expert-control stretches as [episode, first, last] sim ticks.
// The takeover banner is up exactly while control_mode is "expert"; a
// recorded session replayed through this must match the dataset's
// switched intervals.
export function bannerIntervals(frames: FrameUpdate[]): [number, number, number][] {
  const intervals: [number, number, number][] = [];
  let current: [number, number, number] | null = null;
  for (const f of frames) {
    if (f.control_mode === "expert") {
      if (current === null) {
        current = [f.episode, f.sim_tick, f.sim_tick];
      } else if (current[0] === f.episode) {
        current[2] = f.sim_tick;
      } else {
        intervals.push(current);
        current = [f.episode, f.sim_tick, f.sim_tick];
      }
    } else if (current !== null) {
      intervals.push(current);
      current = null;
    }
  }
  if (current !== null) intervals.push(current);
  return intervals;
}
