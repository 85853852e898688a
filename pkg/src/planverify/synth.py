"""Seeded generator of driving tasks and candidate plans for mock runs.

Plans are assembled from a handful of control patterns (reactive checks,
open-loop driving, wait loops, unrolled loops, helpers) over the driving API
so that some satisfy each traffic rule and some do not.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TASKS = (
    "Go straight through the intersection.",
    "Turn left at the next intersection.",
    "Turn right at the next intersection.",
    "Park on the side of the road.",
    "Make a U-turn at the traffic light.",
    "Make a U-turn at the stop sign intersection.",
    "Follow the lane to the next block.",
    "Cross the crosswalk and continue.",
)

CONDITIONS = (
    "pedestrian_observed()",
    "car_observed()",
    "red_light_observed()",
    "stop_sign_observed()",
    "stop_sign_observed() and car_observed()",
    "pedestrian_observed() or car_observed()",
    "pedestrian_observed() or car_observed() or red_light_observed()",
    "red_light_observed() or stop_sign_observed()",
    "not green_light_observed()",
)

FUNCTION_NAMES = ("drive", "cross_intersection", "execute_task", "navigate", "run_plan", "go")


@dataclass(frozen=True)
class Task:
    id: str
    prompt: str
    plans: tuple[str, str]


class _Gen:
    def __init__(self, rng: np.random.Generator):
        self.rng = rng

    def pick(self, seq):
        return seq[int(self.rng.integers(len(seq)))]

    def chance(self, p: float) -> bool:
        return bool(self.rng.random() < p)

    def speed(self) -> str:
        return self.pick(("3", "5", "8", "10", "2.5"))

    def move(self) -> str:
        kind = self.pick(("forward", "forward", "forward", "left", "right", "back"))
        v = self.speed()
        if kind == "forward":
            return f"velocity_publisher({v}, 0)"
        if kind == "left":
            return f"velocity_publisher({v}, {self.pick(('0.5', '0.3', '1'))})"
        if kind == "right":
            return f"velocity_publisher({v}, -{self.pick(('0.5', '0.3', '1'))})"
        return f"velocity_publisher(-{v}, 0)"

    def halt(self) -> str:
        return self.pick(("stop()", "stop()", "velocity_publisher(0, 0)"))

    def pause(self) -> list[str]:
        return [f"sleep({self.pick(('1', '2', '0.5'))})"] if self.chance(0.3) else []

    def cond(self) -> str:
        return self.pick(CONDITIONS)

    def moves(self, lo: int = 1, hi: int = 3) -> list[str]:
        return [self.move() for _ in range(int(self.rng.integers(lo, hi + 1)))]

    # control patterns; each returns body lines (4-space relative indentation)

    def reactive(self) -> list[str]:
        c = self.cond()
        safe = [self.halt()] + self.pause()
        go = self.moves(1, 2)
        if self.chance(0.2):
            safe, go = go, safe  # inverted logic
        pre = self.moves(0, 1) if self.chance(0.4) else []
        return pre + [f"if {c}:"] + _ind(safe) + ["else:"] + _ind(go)

    def open_loop(self) -> list[str]:
        out = self.moves(1, 3) + self.pause() + self.moves(0, 2)
        if self.chance(0.6):
            out.append(self.halt())
        return out

    def check_once(self) -> list[str]:
        c = self.cond()
        out = [f"if {c}:"] + _ind([self.halt()] + self.pause())
        return out + self.moves(1, 3) + ([self.halt()] if self.chance(0.5) else [])

    def wait_loop(self) -> list[str]:
        c = self.cond()
        body = [self.halt()] + self.pause()
        return [f"while {c}:"] + _ind(body) + self.moves(1, 2) + ([self.halt()] if self.chance(0.5) else [])

    def drive_until(self) -> list[str]:
        c = self.cond()
        return [f"while not ({c}):"] + _ind(self.moves(1, 2)) + [self.halt()] + self.pause()

    def forever(self) -> list[str]:
        body = self.reactive() if self.chance(0.7) else self.moves(1, 2) + ([self.halt()] if self.chance(0.5) else [])
        return ["while True:"] + _ind(body)

    def unrolled(self) -> list[str]:
        n = int(self.rng.integers(2, 4))
        body = self.moves(1, 1) + self.pause()
        tail = self.reactive() if self.chance(0.5) else [self.halt()]
        return [f"for _ in range({n}):"] + _ind(body) + tail

    def plan(self) -> str:
        pattern = self.pick((
            self.reactive, self.reactive, self.open_loop, self.check_once, self.wait_loop,
            self.drive_until, self.forever, self.unrolled,
        ))
        body = pattern()
        if self.chance(0.4):
            body = [f"speed = {self.speed()}"] + body
        name = self.pick(FUNCTION_NAMES)
        if self.chance(0.25):
            helper = ["def move_ahead(v):", "    velocity_publisher(v, 0)", ""]
            body = [line.replace("velocity_publisher(10, 0)", "move_ahead(10)") for line in body]
            lines = helper
        else:
            lines = []
        lines += [f"def {name}():"] + _ind(body) + ["", f"{name}()"]
        return "\n".join(lines) + "\n"


def _ind(lines: list[str]) -> list[str]:
    return ["    " + line for line in lines]


def generate_plan(rng: np.random.Generator) -> str:
    return _Gen(rng).plan()


def generate_tasks(n: int, seed: int, prefix: str = "task") -> list[Task]:
    """``n`` tasks, each with two distinct candidate plans."""
    rng = np.random.default_rng(seed)
    g = _Gen(rng)
    tasks = []
    for i in range(n):
        prompt = g.pick(TASKS)
        first = g.plan()
        second = g.plan()
        tries = 0
        while second == first and tries < 20:
            second = g.plan()
            tries += 1
        tasks.append(Task(f"{prefix}-{i:04d}", prompt, (first, second)))
    return tasks
