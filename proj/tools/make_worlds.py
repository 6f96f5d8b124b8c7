#!/usr/bin/env python3
"""Generates the bundled obstacle-course worlds (data/worlds/course_XX.json).

Deterministic: course i is built from random.Random(i). Four families rotate:
slalom walls, pillar fields, zigzag baffles and out-and-back revisit tasks.
"""

import argparse
import json
import random
from pathlib import Path

HEIGHT = 4.0
WALL_TOP = 3.0
ALT = 1.5

COLORS = ["red", "blue", "green", "yellow", "orange", "white", "black", "purple"]
THINGS = ["door", "crate", "cabinet", "sign", "barrel", "statue", "kiosk", "container"]


def box(lo, hi, label):
    return {"min": [round(v, 2) for v in lo], "max": [round(v, 2) for v in hi], "label": label}


def landmark_name(rng):
    return f"{rng.choice(COLORS)} {rng.choice(THINGS)}"


def end_landmark(rng, length, width, y):
    """Landmark against the far wall and the goal 2 m in front of it."""
    name = landmark_name(rng)
    lm = box([length - 1.4, y - 1.0, 0.0], [length - 0.6, y + 1.0, 2.4], name)
    goal = [round(length - 3.4, 2), round(y, 2), ALT]
    return name, lm, goal


def slalom(i, rng):
    length, width = 19.0, 12.0
    boxes = []
    xs = [6.0, 11.5]
    side = rng.choice([0, 1])
    for x in xs:
        gap = rng.uniform(3.2, 4.0)
        if side == 0:
            boxes.append(box([x, 0.0, 0.0], [x + 0.6, width - gap, WALL_TOP], "concrete wall"))
        else:
            boxes.append(box([x, gap, 0.0], [x + 0.6, width, WALL_TOP], "concrete wall"))
        side = 1 - side
    y = rng.uniform(4.5, 7.5)
    name, lm, goal = end_landmark(rng, length, width, y)
    boxes.append(lm)
    return {
        "size": [length, width, HEIGHT],
        "boxes": boxes,
        "start": {"position": [2.0, width / 2, ALT], "yaw": 0.0},
        "instruction": f"weave through the walls and stop in front of the {name}",
        "subtasks": [{"landmark": len(boxes) - 1, "goal": goal}],
    }


def pillars(i, rng):
    length, width = 18.0, 14.0
    boxes = []
    placed = []
    for _ in range(1000):
        if len(placed) == 6:
            break
        x = rng.uniform(5.0, 12.5)
        y = rng.uniform(2.0, width - 3.4)
        s = rng.uniform(0.8, 1.4)
        if all(abs(x - px) > 2.8 or abs(y - py) > 2.8 for px, py in placed):
            placed.append((x, y))
            boxes.append(box([x, y, 0.0], [x + s, y + s, WALL_TOP], "steel pillar"))
    y = rng.uniform(5.0, 9.0)
    name, lm, goal = end_landmark(rng, length, width, y)
    boxes.append(lm)
    return {
        "size": [length, width, HEIGHT],
        "boxes": boxes,
        "start": {"position": [2.0, width / 2, ALT], "yaw": 0.0},
        "instruction": f"fly between the pillars to the {name}",
        "subtasks": [{"landmark": len(boxes) - 1, "goal": goal}],
    }


def zigzag(i, rng):
    length, width = 18.0, 12.0
    boxes = []
    # Short baffles alternating from both sides, overlapping the centerline.
    xs = [5.0, 8.5, 12.0]
    side = rng.choice([0, 1])
    for x in xs:
        reach = rng.uniform(6.8, 7.6)
        if side == 0:
            boxes.append(box([x, 0.0, 0.0], [x + 0.5, reach, WALL_TOP], "wooden baffle"))
        else:
            boxes.append(box([x, width - reach, 0.0], [x + 0.5, width, WALL_TOP], "wooden baffle"))
        side = 1 - side
    y = rng.uniform(4.5, 7.5)
    name, lm, goal = end_landmark(rng, length, width, y)
    boxes.append(lm)
    return {
        "size": [length, width, HEIGHT],
        "boxes": boxes,
        "start": {"position": [2.0, width / 2, ALT], "yaw": 0.0},
        "instruction": f"zigzag past the baffles to the {name}",
        "subtasks": [{"landmark": len(boxes) - 1, "goal": goal}],
    }


def revisit(i, rng):
    length, width = 14.0, 12.0
    boxes = []
    home_name = landmark_name(rng)
    start_y = width / 2
    boxes.append(box([0.4, start_y - 0.8, 0.0], [1.0, start_y + 0.8, 1.6], home_name))
    gap_lo = rng.uniform(3.0, 5.0)
    boxes.append(box([6.5, 0.0, 0.0], [7.1, gap_lo, WALL_TOP], "brick wall"))
    boxes.append(box([6.5, gap_lo + 3.6, 0.0], [7.1, width, WALL_TOP], "brick wall"))
    y = rng.uniform(4.5, 7.5)
    name, lm, goal = end_landmark(rng, length, width, y)
    boxes.append(lm)
    return {
        "size": [length, width, HEIGHT],
        "boxes": boxes,
        "start": {"position": [2.6, start_y, ALT], "yaw": 0.0},
        "instruction": f"go through the gap to the {name}; then return to the {home_name}",
        "subtasks": [
            {"landmark": len(boxes) - 1, "goal": goal},
            {"landmark": 0, "goal": [3.0, round(start_y, 2), ALT], "revisit": True},
        ],
    }


FAMILIES = [slalom, pillars, zigzag, revisit]


def make(i):
    rng = random.Random(i)
    family = FAMILIES[i % len(FAMILIES)]
    w = family(i, rng)
    world = {
        "name": f"course_{i:02d}_{family.__name__}",
        "resolution": 0.2,
        "size": w["size"],
        "origin": [0.0, 0.0, -0.2],
        "feature_dim": 16,
        "feature_seed": 1000 + i,
        "boxes": w["boxes"],
        "start": w["start"],
        "instruction": w["instruction"],
        "delimiter": ";",
        "subtasks": [
            {"landmark": s["landmark"], "goal": s["goal"], "radius": 2.5,
             "revisit": s.get("revisit", False)}
            for s in w["subtasks"]
        ],
        "goal_radius": 5.0,
        "time_limit": 70.0,
    }
    return world


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--count", type=int, default=20)
    ap.add_argument("--out", type=Path, default=Path(__file__).resolve().parent.parent / "data" / "worlds")
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    for i in range(args.count):
        w = make(i)
        (args.out / f"course_{i:02d}.json").write_text(json.dumps(w, indent=2) + "\n")


if __name__ == "__main__":
    main()
