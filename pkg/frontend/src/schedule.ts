// Scripted key schedule used for the recorded reference session: a
// deterministic stand-in for a human driver. The same schedule, stepped
// through the keyboard reducer, must always emit the identical control
// stream; the server-side suite replays that stream and must recover the
// identical dataset a live client session would produce.

import { stepKeyboard, InputState, Keys, NEUTRAL } from "./input.js";
import { ControlInput, encode } from "./protocol.js";

export const SCHEDULE_DT = 0.05;
export const SCHEDULE_TICKS = 400;

export function keysAt(tick: number): Keys {
  return {
    left: tick >= 40 && tick < 120,
    right: tick >= 200 && tick < 260,
    up: !(tick >= 300 && tick < 320),
    down: tick >= 300 && tick < 320,
  };
}

export function driveSchedule(ticks: number = SCHEDULE_TICKS): ControlInput[] {
  const out: ControlInput[] = [];
  let state: InputState = NEUTRAL;
  for (let tick = 0; tick < ticks; tick++) {
    state = stepKeyboard(state, keysAt(tick), SCHEDULE_DT);
    out.push({ type: "control", tick, steer: state.steer, throttle: state.throttle });
  }
  return out;
}

export function scheduleLines(ticks: number = SCHEDULE_TICKS): string[] {
  return driveSchedule(ticks).map(encode);
}
