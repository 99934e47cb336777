// Keyboard and gamepad capture, reduced to one pure stepping function so
// the contracts are testable without a DOM: steering slews toward the
// held direction and decays back to center when released, throttle ramps
// up while held and falls away otherwise, the brake key floors it
// immediately. All outputs stay inside the server's accepted bounds.

export interface InputState {
  steer: number; // [-1, 1], negative is left
  throttle: number; // [0, 1]
}

export interface Keys {
  left: boolean;
  right: boolean;
  up: boolean;
  down: boolean; // brake
}

export const NEUTRAL: InputState = { steer: 0, throttle: 0 };

// Rates are full-scale units per second; at the reference 20 Hz tick they
// give exact binary steps (0.125 steer, 0.0625 throttle) so recorded
// streams are stable to the digit.
export const STEER_SLEW_PER_S = 2.5;
export const STEER_DECAY_PER_S = 5.0;
export const THROTTLE_SLEW_PER_S = 1.25;
export const THROTTLE_DECAY_PER_S = 2.5;

function clamp(v: number, lo: number, hi: number): number {
  return Math.min(Math.max(v, lo), hi);
}

function toward(value: number, target: number, step: number): number {
  if (value < target) return Math.min(value + step, target);
  if (value > target) return Math.max(value - step, target);
  return value;
}

export function stepKeyboard(state: InputState, keys: Keys, dt: number): InputState {
  let steer = state.steer;
  const steering = keys.left !== keys.right; // both held cancels out
  if (steering) {
    steer = toward(steer, keys.left ? -1 : 1, STEER_SLEW_PER_S * dt);
  } else {
    steer = toward(steer, 0, STEER_DECAY_PER_S * dt);
  }

  let throttle = state.throttle;
  if (keys.down) {
    throttle = 0;
  } else if (keys.up) {
    throttle = toward(throttle, 1, THROTTLE_SLEW_PER_S * dt);
  } else {
    throttle = toward(throttle, 0, THROTTLE_DECAY_PER_S * dt);
  }

  return { steer: clamp(steer, -1, 1), throttle: clamp(throttle, 0, 1) };
}

// Gamepad axes pass straight through apart from bound clamping; the
// value the server sees equals the stick position within one sample.
export function stepGamepad(steerAxis: number, throttleAxis: number): InputState {
  return { steer: clamp(steerAxis, -1, 1), throttle: clamp(throttleAxis, 0, 1) };
}

// Device loss contract: hold the last steering, drop the throttle to
// zero; the caller shows the warning and the server's own staleness
// guard pauses the session if nothing fresher arrives.
export function deviceLost(state: InputState): InputState {
  return { steer: state.steer, throttle: 0 };
}
