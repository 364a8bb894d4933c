"""Command line entry point: frsde-plots --spec figure.json"""

from __future__ import annotations

import argparse
import sys

from .render import RenderError, SpecError, load_spec, render


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="frsde-plots",
        description="Render a figure from frsde experiment artifacts.")
    parser.add_argument("--spec", required=True,
                        help="path to a figure spec JSON file")
    args = parser.parse_args(argv)

    try:
        spec = load_spec(args.spec)
    except SpecError as exc:
        print(f"spec error: {exc}", file=sys.stderr)
        return 2

    try:
        result = render(spec)
    except SpecError as exc:
        print(f"spec error: {exc}", file=sys.stderr)
        return 2
    except RenderError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    print(f"wrote {result.out_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
