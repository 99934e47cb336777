"""Expert policy sources.

The scripted oracle is pure pursuit toward a speed-scaled lookahead point
on the route, with a proportional speed governor that slows for turns. It
is deterministic and, on generated tracks (obstacles off-lane), drives
infraction-free; that competence is a precondition every experiment
checks before trusting its labels.

The remote source wraps a human driving over the teleop channel as a
mailbox: latest input wins, a missed tick repeats the previous input
(zero-order hold), and a stale mailbox beyond the hold budget asks the
simulation to pause rather than invent labels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .policy import Action
from .simulator import Simulation

LOOKAHEAD_GAIN = 1.2  # seconds of travel converted to meters of lookahead
LOOKAHEAD_MIN = 3.0
LOOKAHEAD_MAX = 8.0
CRUISE_SPEED = 5.0
TURN_SPEED = 2.5
TURN_ZONE_BEFORE = 14.0  # start slowing this far before a turn node
TURN_ZONE_AFTER = 3.0
THROTTLE_GAIN = 0.8
LOST_HORIZON = 15.0  # max distance to the lookahead point before giving up


class ExpertLostError(Exception):
    """Vehicle strayed too far from the route for pure pursuit to recover."""


def oracle_action(sim: Simulation) -> Action:
    """Pure-pursuit steering plus governed throttle for the current state."""
    state = sim.state
    lookahead = min(max(LOOKAHEAD_GAIN * state.speed, LOOKAHEAD_MIN), LOOKAHEAD_MAX)
    target, _ = sim.lookahead_point(lookahead)
    to_target = target - state.position
    dist = float(np.hypot(*to_target))
    if dist > LOST_HORIZON:
        raise ExpertLostError(
            f"lookahead point {dist:.1f} m away at tick {state.tick}"
        )
    # Signed bearing to the target, counterclockwise positive.
    alpha = math.atan2(to_target[1], to_target[0]) - state.heading
    alpha = math.atan2(math.sin(alpha), math.cos(alpha))
    chord = max(dist, 1e-6)
    delta = math.atan2(2.0 * sim.cfg.wheelbase * math.sin(alpha), chord)
    # Positive alpha means the target is to the left; steer is positive-right.
    steer = min(max(-delta / sim.cfg.max_steer_rad, -1.0), 1.0)

    v_ref = CRUISE_SPEED
    for node in sim.route.nodes:
        if node.label == "straight":
            continue
        if node.s - TURN_ZONE_BEFORE <= state.route_s <= node.s + TURN_ZONE_AFTER:
            v_ref = TURN_SPEED
            break
    throttle = min(max(THROTTLE_GAIN * (v_ref - state.speed), 0.0), 1.0)
    return Action(steer=steer, throttle=throttle)


@dataclass
class RemoteMailbox:
    """Latest human control input, with zero-order hold and a pause budget.

    One writer (the network receiver) calls deliver(); one reader (the sim
    loop) calls take() once per tick.
    """

    hold_budget_ticks: int = 10
    _last: Action | None = None
    _stale_ticks: int = 0

    def deliver(self, action: Action) -> None:
        if not (-1.0 <= action.steer <= 1.0 and 0.0 <= action.throttle <= 1.0):
            raise ValueError(f"control input out of bounds: {action}")
        self._last = action
        self._stale_ticks = 0

    def take(self) -> Action | None:
        """Input for this tick, or None meaning the sim must pause.

        A fresh or recently-held input passes through; beyond the hold
        budget the mailbox refuses so no fabricated labels enter the data.
        """
        if self._last is None:
            return None
        self._stale_ticks += 1
        if self._stale_ticks > self.hold_budget_ticks:
            return None
        return self._last

    @property
    def live(self) -> bool:
        return self._last is not None and self._stale_ticks <= self.hold_budget_ticks
