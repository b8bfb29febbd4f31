#!/usr/bin/env python3
"""
LeakSentinel Scenario Generator
Write a scenario file for one leak source, validated before it is saved.

Usage:
    python generate_scenario.py spray 8                  # calibrated spray at 8 m
    python generate_scenario.py jet 2 --ambient -35      # louder room
    python generate_scenario.py spray 0.5 --barrier gypsum_1.3cm --output wall.scn
"""

import argparse
import os
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

import yaml

sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from leaksentinel.config import ConfigError, parse_scenario

SOURCE_KINDS = {"spray": "LeakSpray", "jet": "LeakJet"}


def build_scenario(source: str, distance_m: float, ambient_db: float = -40.0, seed: int = 0,
                   duration_s: float = 600.0, barriers: Optional[List[str]] = None,
                   level_db: Optional[float] = None) -> Dict[str, Any]:
    """Scenario document with a single leak source"""
    path: Dict[str, Any] = {"distance_m": distance_m}
    if barriers:
        path["barrier_losses_db"] = list(barriers)
    return {
        "name": f"{source}_{distance_m:g}m",
        "seed": seed,
        "duration_s": duration_s,
        "ambient_level_db": ambient_db,
        "sources": [{
            "kind": SOURCE_KINDS[source],
            "level_db": "calibrated" if level_db is None else level_db,
            "path": path,
        }],
    }


def generate_scenario(document: Dict[str, Any], output_file: Optional[str] = None) -> str:
    text = yaml.safe_dump(document, sort_keys=False)
    parse_scenario(text, path=output_file)

    output_path = Path(output_file or f"{document['name']}.scn")
    output_path.parent.mkdir(parents=True, exist_ok=True)
    output_path.write_text(text, encoding='utf-8')
    return str(output_path)


def main():
    parser = argparse.ArgumentParser(
        description="Generate LeakSentinel scenario files",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  python generate_scenario.py spray 8
  python generate_scenario.py jet 2 --ambient -35 --seed 4
  python generate_scenario.py spray 0.5 --barrier gypsum_1.3cm --output wall.scn
  python generate_scenario.py spray 3 --level -18
        """
    )

    parser.add_argument("source", choices=sorted(SOURCE_KINDS), help="Leak type")
    parser.add_argument("distance", type=float, help="Source distance in metres")
    parser.add_argument("--ambient", type=float, default=-40.0, help="Ambient band level in dB (default: -40)")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--duration", type=float, default=600.0, help="Scenario duration in seconds")
    parser.add_argument("--barrier", action="append", help="Barrier material or loss in dB (repeatable)")
    parser.add_argument("--level", type=float, help="Source level in dB (default: calibrated)")
    parser.add_argument("--output", "-o", help="Output filename (default: <source>_<distance>m.scn)")

    args = parser.parse_args()

    barriers = []
    for item in args.barrier or []:
        try:
            barriers.append(float(item))
        except ValueError:
            barriers.append(item)

    try:
        document = build_scenario(args.source, args.distance, args.ambient, args.seed, args.duration,
                                  barriers, args.level)
        output_path = generate_scenario(document, args.output)
    except ConfigError as e:
        print(f"✗ Invalid scenario: {e}")
        return 1

    print(f"✓ Generated scenario: {output_path}")
    print(f"  Run it with: python run.py run {output_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
