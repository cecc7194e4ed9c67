"""Command-line entry point: pipeline stages plus the HTTP service.

    ctxtriage <stage> --manifest PATH [--seed INT] [--out DIR]
    ctxtriage serve --manifest PATH [--port 8000]

CB_SEED in the environment overrides the manifest seed.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .pipeline import MissingUpstreamError, Pipeline, PipelineError, STAGES, load_manifest


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ctxtriage",
                                     description="alert-triage assistance experiments")
    sub = parser.add_subparsers(dest="stage", required=True)
    for stage in STAGES:
        p = sub.add_parser(stage, help=f"run the {stage} stage")
        p.add_argument("--manifest", required=True, help="experiment manifest JSON")
        p.add_argument("--seed", type=int, default=None, help="override the manifest seed")
        p.add_argument("--out", default=None, help="override the output directory")
        if stage == "serve":
            p.add_argument("--host", default="127.0.0.1")
            p.add_argument("--port", type=int, default=8000)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="[%(asctime)s] %(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    manifest = load_manifest(args.manifest, seed_override=args.seed, out_override=args.out)
    pipeline = Pipeline(manifest)
    try:
        if args.stage == "serve":
            from .api import bundle_from_pipeline, create_app

            import uvicorn

            app = create_app(bundle_from_pipeline(pipeline))
            uvicorn.run(app, host=args.host, port=args.port)
            return 0
        result = pipeline.run(args.stage)
    except MissingUpstreamError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if result is not None:
        json.dump(result, sys.stdout, sort_keys=True, indent=1)
        print()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
