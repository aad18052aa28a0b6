"""Single entry point wiring every pipeline stage, the kernels self-check, and
the review server."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import assembler, evaluation, renderer, router, verifier
from .core import Sample, read_jsonl, write_jsonl
from .gateway import Cassette, Gateway, HttpTransport, RetryPolicy

EXIT_OK = 0
EXIT_DATA = 1
EXIT_CONFIG = 2


class ConfigError(Exception):
    pass


def load_config(path: str | None) -> dict:
    if not path:
        return {}
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot load config {path}: {exc}") from None


def build_gateway(cfg: dict, mode: str, cassette_path: str | None) -> Gateway:
    policy_cfg = cfg.get("retry", {})
    policy = RetryPolicy(
        max_attempts=int(policy_cfg.get("max_attempts", 3)),
        backoff_base_s=float(policy_cfg.get("backoff_base_s", 0.0)),
        backoff_multiplier=float(policy_cfg.get("backoff_multiplier", 2.0)),
        max_in_flight=int(policy_cfg.get("max_in_flight", 8)),
    )
    cassette = Cassette(cassette_path) if cassette_path else None
    if mode == "replay":
        if cassette is None:
            raise ConfigError("replay mode requires --cassette")
        return Gateway(mode="replay", cassette=cassette, policy=policy)
    backends = cfg.get("backends")
    if not backends:
        raise ConfigError(f"{mode} mode requires a backends section in the config")
    transport = HttpTransport(backends)
    return Gateway(mode=mode, transport=transport, cassette=cassette,
                   policy=policy)


def _read_samples(path: str) -> list[Sample]:
    return [Sample.from_json(d) for d in read_jsonl(path)]


def cmd_route(args) -> int:
    cfg = load_config(args.config)
    rcfg = router.RouterConfig.from_json(cfg.get("router", {}))
    gateway = build_gateway(cfg, args.mode, args.cassette)
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    samples = _read_samples(args.manifest)
    rows, stats = router.route_corpus(samples, rcfg, gateway, seed=seed,
                                      workers=args.workers)
    write_jsonl(args.out, rows)
    if args.stats:
        Path(args.stats).write_text(
            json.dumps(stats.to_json(), indent=2, sort_keys=True) + "\n")
    print(json.dumps(stats.to_json(), sort_keys=True))
    return EXIT_OK


def cmd_render(args) -> int:
    cfg = load_config(args.config)
    rcfg = renderer.RenderConfig.from_json(cfg.get("renderer", {}))
    gateway = build_gateway(cfg, args.mode, args.cassette)
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    rows = list(read_jsonl(args.routed))
    image_dir = args.image_dir or str(Path(args.out).parent / "rendered_images")
    out_rows = renderer.render_corpus(rows, rcfg, gateway, args.media_dir,
                                      image_dir, seed=seed, workers=args.workers)
    write_jsonl(args.out, out_rows)
    return EXIT_OK


def cmd_verify(args) -> int:
    cfg = load_config(args.config)
    vcfg = verifier.VerifierConfig.from_json(cfg.get("verifier", {}))
    gateway = build_gateway(cfg, args.mode, args.cassette)
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    rows = list(read_jsonl(args.rendered))
    out_rows = verifier.verify_corpus(rows, vcfg, gateway, seed=seed,
                                      workers=args.workers)
    write_jsonl(args.out, out_rows)
    if args.stats:
        trails = [verifier.VerificationTrail.from_json(r["verification"])
                  for r in out_rows if r.get("verification")]
        stats = verifier.stage_statistics(trails)
        Path(args.stats).write_text(
            json.dumps(stats, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_backfill(args) -> int:
    cfg = load_config(args.config)
    gateway = build_gateway(cfg, args.mode, args.cassette)
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    tol = float(cfg.get("router", {}).get("numeric_tolerance", 0.25))
    rows = list(read_jsonl(args.routed))
    out_rows = assembler.backfill_corpus(rows, args.backend, gateway, tol=tol,
                                         seed=seed, workers=args.workers)
    write_jsonl(args.out, out_rows)
    return EXIT_OK


def cmd_assemble(args) -> int:
    cfg = load_config(args.config)
    target = args.target_ratio
    if target is None:
        target = float(cfg.get("balance", {}).get("target_ratio", 0.4786))
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    verified = list(read_jsonl(args.verified))
    backfilled = list(read_jsonl(args.backfilled))
    records, stats = assembler.assemble_corpus(verified, backfilled,
                                               target_ratio=target, seed=seed)
    if args.decisions:
        log = assembler.ReviewLog(args.decisions)
        records = assembler.export_final(records, log)
    write_jsonl(args.out, (r.to_json() for r in records))
    print(json.dumps(stats, sort_keys=True))
    return EXIT_OK


def _load_records(path: str) -> list[assembler.InterleavedRecord]:
    records = []
    for d in read_jsonl(path):
        if "segments" in d:
            records.append(assembler.InterleavedRecord.from_json(d))
        else:
            # bare composition rows: mode/corpus/category/modality only
            mode = d["mode"]
            segs = (("Plan", ""), ("ImageStart", assembler.IMG_START),
                    ("Image", ""), ("ImageEnd", assembler.IMG_END),
                    ("Deduct", ""), ("Answer", "")) \
                if mode == assembler.INTERLEAVED else \
                (("Plan", ""), ("Deduct", ""), ("Answer", ""))
            records.append(assembler.InterleavedRecord(
                sample_id=d.get("sample_id", ""), mode=mode, segments=segs,
                corpus=d.get("corpus", "OTHER"),
                task_category=d.get("task_category", ""),
                input_modality=d.get("input_modality", "SingleImage")))
    return records


def cmd_stats(args) -> int:
    records = _load_records(args.manifest)
    report = assembler.composition_report(records)
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n")
    if args.figures:
        from .reporting import composition_figures
        composition_figures(report, args.figures)
    modes = report["by_mode"]
    parts = [f"{m}: {v['count']} ({v['percent']:.2f}%)"
             for m, v in modes.items()]
    print("; ".join(parts))
    print(text)
    return EXIT_OK


def cmd_eval(args) -> int:
    golds = {s.id: s for s in _read_samples(args.gold)}
    preds = {d["sample_id"]: d.get("raw", d.get("answer", ""))
             for d in read_jsonl(args.pred)}
    scores = evaluation.score_predictions(preds, golds)
    pairing = json.loads(Path(args.pairing).read_text()) if args.pairing else {}
    tier_map = json.loads(Path(args.tiers).read_text()) if args.tiers else None
    missing = [sid for sid in golds if sid not in preds]
    report = evaluation.build_report(
        scores, pairing=pairing, tier_map=tier_map,
        counts={"gold": len(golds), "predictions": len(preds),
                "missing_predictions": len(missing)},
        flags=[f"missing prediction: {sid}" for sid in sorted(missing)])
    Path(args.out).write_bytes(evaluation.emit_report(report, "json"))
    if args.markdown:
        Path(args.markdown).write_bytes(evaluation.emit_report(report, "markdown"))
    if args.figures:
        from .reporting import eval_figures
        eval_figures(report, args.figures)
    print(json.dumps(report.to_json()["overall"], sort_keys=True))
    return EXIT_OK


def cmd_kernels(args) -> int:
    from . import numerics
    if args.kernels_cmd == "selfcheck":
        return EXIT_OK if numerics.selfcheck() else EXIT_DATA
    raise ConfigError(f"unknown kernels subcommand {args.kernels_cmd!r}")


def cmd_review(args) -> int:
    from . import review_server
    if args.review_cmd == "serve":
        review_server.serve(args.queue, args.log, port=args.port,
                            static_dir=args.static)
        return EXIT_OK
    raise ConfigError(f"unknown review subcommand {args.review_cmd!r}")


def _add_gateway_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", default=None)
    p.add_argument("--mode", choices=["live", "record", "replay"],
                   default="replay")
    p.add_argument("--cassette", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--workers", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="spatialforge")
    ap.add_argument("--json-errors", action="store_true",
                    help="print errors as structured JSON on stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("route", help="difficulty-aware routing")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--stats", default=None)
    _add_gateway_args(p)
    p.set_defaults(fn=cmd_route)

    p = sub.add_parser("render", help="task-oriented rendering")
    p.add_argument("--routed", required=True)
    p.add_argument("--media-dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--image-dir", default=None)
    _add_gateway_args(p)
    p.set_defaults(fn=cmd_render)

    p = sub.add_parser("verify", help="zero-leakage + two-stage verification")
    p.add_argument("--rendered", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--stats", default=None)
    _add_gateway_args(p)
    p.set_defaults(fn=cmd_verify)

    p = sub.add_parser("backfill", help="textual chain backfilling")
    p.add_argument("--routed", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--backend", default="synthesizer")
    _add_gateway_args(p)
    p.set_defaults(fn=cmd_backfill)

    p = sub.add_parser("assemble", help="balance and assemble final records")
    p.add_argument("--verified", required=True)
    p.add_argument("--backfilled", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--target-ratio", type=float, default=None)
    p.add_argument("--decisions", default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(fn=cmd_assemble)

    p = sub.add_parser("stats", help="composition statistics")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--figures", default=None)
    p.set_defaults(fn=cmd_stats)

    p = sub.add_parser("eval", help="benchmark scoring")
    p.add_argument("--pred", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--protocol", choices=["vsi", "spar"], default="vsi")
    p.add_argument("--tiers", default=None)
    p.add_argument("--pairing", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--markdown", default=None)
    p.add_argument("--figures", default=None)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("kernels", help="numeric kernel utilities")
    ksub = p.add_subparsers(dest="kernels_cmd", required=True)
    ksub.add_parser("selfcheck")
    p.set_defaults(fn=cmd_kernels)

    p = sub.add_parser("review", help="human review server")
    rsub = p.add_subparsers(dest="review_cmd", required=True)
    ps = rsub.add_parser("serve")
    ps.add_argument("--port", type=int, default=8000)
    ps.add_argument("--queue", required=True)
    ps.add_argument("--log", required=True)
    ps.add_argument("--static", default=None)
    p.set_defaults(fn=cmd_review)

    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    try:
        return args.fn(args)
    except ConfigError as exc:
        _err(args, "config", exc)
        return EXIT_CONFIG
    except (OSError, ValueError, KeyError) as exc:
        _err(args, "data", exc)
        return EXIT_DATA


def _err(args, kind: str, exc: Exception) -> None:
    if getattr(args, "json_errors", False):
        sys.stderr.write(json.dumps(
            {"error": kind, "type": type(exc).__name__, "message": str(exc)})
            + "\n")
    else:
        sys.stderr.write(f"{kind} error: {exc}\n")


if __name__ == "__main__":
    sys.exit(main())
