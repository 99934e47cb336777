// Socket wiring. The server runs the session lockstep: it sends one
// frame per control it receives, so the pump answers every frame with
// the current input sample. Timing on this side can be arbitrary; the
// recording depends only on the control values.

import { InputState } from "./input.js";
import { ClientSession } from "./session.js";
import { ControlInput, Message, PROTOCOL_VERSION, decode, encode } from "./protocol.js";

export interface Connection {
  send(msg: Message): void;
  close(): void;
  transcript: string[]; // every line in arrival order, for session logs
}

export function connect(
  url: string,
  session: ClientSession,
  sampleInput: () => InputState,
  onUpdate: () => void,
): Connection {
  const socket = new WebSocket(url);
  const transcript: string[] = [];

  const send = (msg: Message): void => {
    socket.send(encode(msg));
  };

  socket.addEventListener("open", () => {
    send({ type: "hello", role: "client", version: PROTOCOL_VERSION, session: "" });
    // the first control primes the lockstep loop
    pump(0);
  });

  const pump = (seenTick: number): void => {
    const input = sampleInput();
    const control: ControlInput = {
      type: "control",
      tick: seenTick,
      steer: input.steer,
      throttle: input.throttle,
    };
    send(control);
  };

  socket.addEventListener("message", (event: MessageEvent<string>) => {
    transcript.push(event.data);
    const msg = decode(event.data);
    session.handle(msg);
    if (msg.type === "frame") {
      pump(msg.tick);
    } else if (msg.type === "pause") {
      // the server froze on stale input; offer a fresh sample to resume
      pump(session.lastFrame?.tick ?? 0);
    }
    onUpdate();
  });

  socket.addEventListener("close", () => {
    onUpdate();
  });

  return { send, close: () => socket.close(), transcript };
}
