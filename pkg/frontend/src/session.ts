// Client-side session state machine, transport-free. Every displayed
// quantity originates from decoded server messages; the renderer reads
// this state and adds nothing of its own, which is what keeps recorded
// sessions replayable from their transcripts alone.

import {
  End,
  FrameUpdate,
  Message,
  PROTOCOL_VERSION,
  ProtocolError,
  SessionConfig,
  TrackGeometry,
} from "./protocol.js";

export type Overlay = "paused" | "ended" | "error" | null;

export class ClientSession {
  config: SessionConfig | null = null;
  tracks = new Map<number, TrackGeometry>();
  frames: FrameUpdate[] = [];
  lastFrame: FrameUpdate | null = null;
  infractionFlash: string | null = null;
  end: End | null = null;
  errors: string[] = [];
  private paused = false;
  private lastTick = -1;

  handle(msg: Message): void {
    switch (msg.type) {
      case "hello":
        if (msg.version !== PROTOCOL_VERSION) {
          this.errors.push(`server speaks protocol v${msg.version}, client v${PROTOCOL_VERSION}`);
        }
        return;
      case "config":
        this.config = msg;
        return;
      case "track":
        this.tracks.set(msg.episode, msg);
        return;
      case "frame":
        if (msg.tick <= this.lastTick) {
          throw new ProtocolError(
            `frame tick must strictly increase: ${msg.tick} after ${this.lastTick}`,
          );
        }
        this.lastTick = msg.tick;
        this.frames.push(msg);
        this.lastFrame = msg;
        this.infractionFlash = msg.infraction;
        return;
      case "pause":
        this.paused = true;
        return;
      case "resume":
        this.paused = false;
        return;
      case "end":
        this.end = msg;
        return;
      case "error":
        this.errors.push(msg.message);
        return;
      case "control":
        // client-to-server only; a server echoing it is a protocol breach
        throw new ProtocolError("unexpected control message from server");
    }
  }

  // The takeover banner is up exactly when the human drives.
  bannerVisible(): boolean {
    return this.lastFrame !== null && this.lastFrame.control_mode === "expert";
  }

  currentTrack(): TrackGeometry | null {
    if (this.lastFrame === null) return null;
    return this.tracks.get(this.lastFrame.episode) ?? null;
  }

  overlay(): Overlay {
    if (this.errors.length > 0) return "error";
    if (this.end !== null) return "ended";
    if (this.paused) return "paused";
    return null;
  }
}
