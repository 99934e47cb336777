// Composition root: keyboard and gamepad are independent event sources
// feeding one latest-input mailbox; the socket pump samples it whenever
// the server asks for a control; the render loop repaints from session
// state at display rate.

import { InputState, NEUTRAL, deviceLost, stepGamepad, stepKeyboard, Keys } from "./input.js";
import { connect, Connection } from "./net.js";
import { render } from "./render.js";
import { ClientSession } from "./session.js";

const canvas = document.getElementById("view") as HTMLCanvasElement | null;
if (!canvas) throw new Error("canvas #view not found");
const ctx = canvas.getContext("2d");
if (!ctx) throw new Error("2d context unavailable");

const urlInput = document.getElementById("url") as HTMLInputElement | null;
const connectBtn = document.getElementById("connect") as HTMLButtonElement | null;
const statusEl = document.getElementById("status") as HTMLSpanElement | null;
const downloadBtn = document.getElementById("download") as HTMLButtonElement | null;

const keys: Keys = { left: false, right: false, up: false, down: false };
let input: InputState = NEUTRAL;
let usingGamepad = false;
let session = new ClientSession();
let connection: Connection | null = null;

const KEYMAP: Record<string, keyof Keys> = {
  ArrowLeft: "left",
  KeyA: "left",
  ArrowRight: "right",
  KeyD: "right",
  ArrowUp: "up",
  KeyW: "up",
  ArrowDown: "down",
  KeyS: "down",
};

window.addEventListener("keydown", (e) => {
  const k = KEYMAP[e.code];
  if (k !== undefined) {
    keys[k] = true;
    e.preventDefault();
  }
});
window.addEventListener("keyup", (e) => {
  const k = KEYMAP[e.code];
  if (k !== undefined) {
    keys[k] = false;
    e.preventDefault();
  }
});

window.addEventListener("gamepadconnected", () => {
  usingGamepad = true;
});
window.addEventListener("gamepaddisconnected", () => {
  usingGamepad = false;
  input = deviceLost(input);
  if (statusEl) statusEl.textContent = "gamepad lost, throttle dropped";
});

// input integrates at the session tick rate regardless of display rate
const INPUT_DT = 0.05;
setInterval(() => {
  if (usingGamepad) {
    const pad = navigator.getGamepads()[0];
    if (pad) {
      const throttleAxis = pad.buttons[7]?.value ?? (1 - (pad.axes[3] ?? 1)) / 2;
      input = stepGamepad(pad.axes[0] ?? 0, throttleAxis);
      return;
    }
    input = deviceLost(input);
    return;
  }
  input = stepKeyboard(input, keys, INPUT_DT);
}, INPUT_DT * 1000);

function statusLine(): string {
  if (connection === null) return "not connected";
  if (session.end !== null) {
    return `ended: ${session.end.reason} (${session.end.frames} frames, ${session.end.episodes} episodes)`;
  }
  if (session.errors.length > 0) return session.errors[session.errors.length - 1];
  const f = session.lastFrame;
  return f === null ? "connected, waiting" : `frame ${f.tick}`;
}

connectBtn?.addEventListener("click", () => {
  session = new ClientSession();
  connection = connect(
    urlInput?.value ?? "ws://127.0.0.1:8765",
    session,
    () => input,
    () => {
      if (statusEl) statusEl.textContent = statusLine();
    },
  );
});

downloadBtn?.addEventListener("click", () => {
  if (connection === null) return;
  const blob = new Blob([connection.transcript.join("\n") + "\n"], {
    type: "application/jsonl",
  });
  const a = document.createElement("a");
  a.href = URL.createObjectURL(blob);
  a.download = "session-transcript.jsonl";
  a.click();
  URL.revokeObjectURL(a.href);
});

function loop(): void {
  render(canvas!, ctx!, session);
  requestAnimationFrame(loop);
}
loop();
