"""``wesr`` command line: validate, score, wer, stats, align, normalize, perturb.

Exit codes: 0 success, 1 content failure (bad transcripts), 2 I/O or schema
failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path
from typing import Sequence

from . import __version__
from .align import event_preserving_align
from .corpus import (
    CorpusError,
    DuplicateId,
    ParseFailure,
    SchemaError,
    compute_stats,
    load_hypotheses,
    load_manifest,
    normalize_external,
    read_manifest,
    write_jsonl,
)
from .perturb import PerturbSpec, perturb_corpus
from .score import PRF, ScoreReport, score_corpus, wer_counts
from .taxonomy import DATASETS, TaxonomyError, default_mapping, load_mapping_overrides
from .transcript import ParseError, parse, parse_lenient, serialize

EXIT_OK, EXIT_CONTENT, EXIT_IO = 0, 1, 2


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _dump_json(doc) -> str:
    return json.dumps(doc, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def _pct(x) -> str:
    return f"{100 * float(x):.1f}"


def _prf_cell(x: PRF | None) -> str:
    if x is None:
        return "n/a"
    return " / ".join(_pct(v) for v in (x.precision, x.recall, x.f1))


def _md_table(header: Sequence[str], rows: list[Sequence]) -> list[str]:
    out = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
    out += ["| " + " | ".join(str(c) for c in r) + " |" for r in rows]
    return out


def _csv(rows: list[Sequence]) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


def _load_refs(path: str, lang: str | None):
    try:
        entries = load_manifest(path)
    except ParseFailure as e:
        raise CliError(f"{path}: reference {e.id!r} does not parse: {e.diagnostic}", EXIT_CONTENT) from None
    if lang:
        entries = [e for e in entries if e.language == lang]
    return entries


# --- validate -----------------------------------------------------------------


def cmd_validate(args) -> tuple[str, int]:
    lines, n = [], 0
    for e in read_manifest(args.manifest):
        _, diags = parse_lenient(e.text, e.language)
        for d in diags:
            lines.append(f"{e.id}:{d.offset}: {d.kind.value}: {d.message}")
        n += len(diags)
    lines.append(f"{n} diagnostic{'s' if n != 1 else ''}")
    return "\n".join(lines) + "\n", EXIT_CONTENT if n else EXIT_OK


# --- score --------------------------------------------------------------------


def _score_report(args) -> ScoreReport:
    entries = _load_refs(args.ref, args.lang)
    raw = load_hypotheses(args.hyp)
    refs = {e.id: e.parsed() for e in entries}
    if args.lang:
        others = {e.id for e in read_manifest(args.ref)} - set(refs)
        raw = {k: v for k, v in raw.items() if k not in others}
    hyps, diagnostics, failed = {}, [], []
    for utt_id in sorted(raw):
        text = raw[utt_id]
        if args.strict:
            try:
                hyps[utt_id] = parse(text, "strict")
            except ParseError as e:
                failed.append((utt_id, e.diagnostic))
        else:
            t, diags = parse_lenient(text)
            hyps[utt_id] = t
            diagnostics.extend((utt_id, str(d)) for d in diags)
    if failed:
        msg = "\n".join(f"{i}: {d}" for i, d in failed)
        raise CliError(f"{len(failed)} hypothesis transcript(s) failed strict parsing:\n{msg}", EXIT_CONTENT)
    return score_corpus(refs, hyps, workers=args.jobs, diagnostics=diagnostics)


def render_score(report: ScoreReport, fmt: str, aggregate: bool, kinds: bool) -> str:
    if fmt == "json":
        doc = report.to_dict()
        if not aggregate:
            doc.pop("categories")
        if not kinds:
            doc.pop("kinds")
        return _dump_json(doc)

    if fmt == "csv":
        rows: list[Sequence] = [("section", "label", "tp", "fp", "fn", "precision", "recall", "f1")]

        def add(section, label, c, x):
            vals = ("", "", "") if x is None else tuple(f"{float(v):.6f}" for v in (x.precision, x.recall, x.f1))
            counts = ("", "", "") if c is None else (c.tp, c.fp, c.fn)
            rows.append((section, label, *counts, *vals))

        for name, (c, x) in report.per_tag().items():
            add("tag", name, c, x)
        add("tag", "micro", report.counts.total(), report.micro)
        add("tag", "macro", None, report.macro)
        if aggregate:
            for cat, (c, x) in report.categories().items():
                add("category", cat.value, c, x)
            add("category", "micro", report.category_counts.total(), report.category_micro)
            add("category", "macro", None, report.category_macro)
        if kinds:
            for kind, x in report.kinds().items():
                add("kind", kind.value, None, x)
        return _csv(rows)

    out = _md_table(
        ("Tag", "P / R / F1 (%)", "TP", "FP", "FN"),
        [(n, _prf_cell(x), c.tp, c.fp, c.fn) for n, (c, x) in report.per_tag().items()],
    )
    tot = report.counts.total()
    out.append(f"| micro | {_prf_cell(report.micro)} | {tot.tp} | {tot.fp} | {tot.fn} |")
    out.append(f"| macro | {_prf_cell(report.macro)} | | | |")
    if aggregate:
        out += ["", "Aggregated categories", ""]
        out += _md_table(
            ("Category", "P / R / F1 (%)", "TP", "FP", "FN"),
            [(cat.value, _prf_cell(x), c.tp, c.fp, c.fn) for cat, (c, x) in report.categories().items()],
        )
        ctot = report.category_counts.total()
        out.append(f"| micro | {_prf_cell(report.category_micro)} | {ctot.tp} | {ctot.fp} | {ctot.fn} |")
        out.append(f"| macro | {_prf_cell(report.category_macro)} | | | |")
    if kinds:
        out += ["", "Event kinds (micro)", ""]
        out += _md_table(("Kind", "P / R / F1 (%)"), [(k.value, _prf_cell(x)) for k, x in report.kinds().items()])
    out += [
        "",
        f"{report.utterances} utterances scored; {len(report.missing)} missing hypotheses; "
        f"{len(report.extra)} unmatched hypotheses; {report.dropped_spans} spans dropped in alignment; "
        f"{len(report.diagnostics)} lenient-parse diagnostics",
    ]
    return "\n".join(out) + "\n"


def cmd_score(args) -> tuple[str, int]:
    report = _score_report(args)
    if report.missing:
        print(f"warning: {len(report.missing)} reference utterances have no hypothesis", file=sys.stderr)
    return render_score(report, args.format, args.aggregate, args.kinds), EXIT_OK


# --- wer ----------------------------------------------------------------------


def cmd_wer(args) -> tuple[str, int]:
    entries = _load_refs(args.ref, args.lang)
    hyps = load_hypotheses(args.hyp)
    per, pooled = [], {}
    for e in sorted(entries, key=lambda e: e.id):
        dist, n = wer_counts(e.text, hyps.get(e.id, ""), e.language)
        per.append((e.id, e.language, dist, n))
        for key in (e.language, "all"):
            d0, n0 = pooled.get(key, (0, 0))
            pooled[key] = (d0 + dist, n0 + n)

    def rate(d, n):
        return round(d / max(1, n), 6)

    system = Path(args.hyp).stem
    langs = [k for k in ("en", "zh", "mixed", "all") if k in pooled] or ["all"]
    pooled.setdefault("all", (0, 0))
    if args.format == "json":
        return _dump_json(
            {
                "system": system,
                "corpus": {k: {"errors": d, "tokens": n, "wer": rate(d, n)} for k, (d, n) in pooled.items()},
                "utterances": [
                    {"id": i, "language": lang, "errors": d, "tokens": n, "wer": rate(d, n)}
                    for i, lang, d, n in per
                ],
            }
        ), EXIT_OK
    if args.format == "csv":
        rows: list[Sequence] = [("id", "language", "errors", "tokens", "wer")]
        rows += [(i, lang, d, n, f"{rate(d, n):.6f}") for i, lang, d, n in per]
        rows += [(f"corpus:{k}", k, d, n, f"{rate(d, n):.6f}") for k, (d, n) in pooled.items()]
        return _csv(rows), EXIT_OK
    out = ["WER (%)", ""]
    out += _md_table(("System", *langs), [(system, *(f"{100 * rate(*pooled[k]):.1f}" for k in langs))])
    out += ["", "Per utterance", ""]
    out += _md_table(
        ("ID", "Language", "Errors", "Tokens", "WER (%)"),
        [(i, lang, d, n, f"{100 * rate(d, n):.1f}") for i, lang, d, n in per],
    )
    return "\n".join(out) + "\n", EXIT_OK


# --- stats --------------------------------------------------------------------


def cmd_stats(args) -> tuple[str, int]:
    try:
        stats = compute_stats(load_manifest(args.manifest))
    except ParseFailure as e:
        raise CliError(f"{args.manifest}: {e}", EXIT_IO) from None
    doc = stats.to_dict()
    if args.format == "json":
        return _dump_json(doc), EXIT_OK
    if args.format == "csv":
        rows: list[Sequence] = [("section", "key", "count", "percent")]
        rows += [("summary", "utterances", stats.utterances, ""), ("summary", "tagged_utterances", stats.tagged_utterances, "")]
        rows.append(("summary", "total_tags", stats.total_tags, ""))
        for section, hist in (("total_tags_per_utterance", stats.total_tag_hist), ("unique_tags_per_utterance", stats.unique_tag_hist)):
            pct = stats.hist_percent(hist)
            rows += [(section, k, v, f"{pct[k]:.2f}") for k, v in hist.items()]
        rows += [("kind", "continuous", stats.continuous, f"{100 * float(stats.continuous_share):.2f}")]
        rows += [("kind", "discrete", stats.discrete, f"{100 * float(stats.discrete_share):.2f}")]
        rows += [("tag", k, v, "") for k, v in stats.per_tag.items()]
        rows += [("category", k, v, "") for k, v in stats.per_category.items()]
        rows += [("language", k, "", f"{100 * float(v):.2f}") for k, v in stats.language_by_count.items()]
        return _csv(rows), EXIT_OK

    def cells(hist):
        pct = stats.hist_percent(hist)
        return [f"{v} ({pct[k]:.2f}%)" for k, v in hist.items()]

    out = [
        f"Utterances: {stats.utterances} ({stats.tagged_utterances} with tags)",
        f"Tag occurrences: {stats.total_tags}",
        f"Continuous / discrete: {_pct(stats.continuous_share)}% / {_pct(stats.discrete_share)}%",
        "",
    ]
    out += _md_table(
        ("Per utterance", "1", "2", ">=3"),
        [("Total tags", *cells(stats.total_tag_hist)), ("Unique tags", *cells(stats.unique_tag_hist))],
    )
    out += ["", *_md_table(("Tag", "Count"), list(stats.per_tag.items()))]
    out += ["", *_md_table(("Category", "Count"), list(stats.per_category.items()))]
    share = stats.language_by_duration or stats.language_by_count
    basis = "duration" if stats.language_by_duration else "utterances"
    out += ["", *_md_table(("Language", f"Share by {basis} (%)"), [(k, _pct(v)) for k, v in share.items()])]
    return "\n".join(out) + "\n", EXIT_OK


# --- align --------------------------------------------------------------------


def cmd_align(args) -> tuple[str, int]:
    try:
        ref = parse(args.ref, "strict")
    except ParseError as e:
        raise CliError(f"reference: {e.diagnostic}", EXIT_CONTENT) from None
    if args.strict:
        try:
            hyp = parse(args.hyp, "strict")
        except ParseError as e:
            raise CliError(f"hypothesis: {e.diagnostic}", EXIT_CONTENT) from None
    else:
        hyp, _ = parse_lenient(args.hyp)
    result = event_preserving_align(hyp, ref.words, with_trace=args.debug)
    aligned = serialize(result.aligned)
    if args.format == "json":
        doc = {
            "aligned": aligned,
            "ops": [list(op.as_tuple()) for op in result.ops],
            "counts": result.counts,
            "dropped": [serialize_span(s) for s in result.dropped],
        }
        if args.debug:
            doc["trace"] = list(result.trace)
        return _dump_json(doc), EXIT_OK
    out = list(result.trace) if args.debug else []
    out.append(aligned)
    return "\n".join(out) + "\n", EXIT_OK


def serialize_span(s) -> str:
    return f"<{s.tag.name}> {s.start}..{s.end}"


# --- normalize ----------------------------------------------------------------


def cmd_normalize(args) -> tuple[str, int]:
    mapping = default_mapping()
    if args.mapping:
        mapping = mapping.with_overrides(load_mapping_overrides(args.mapping))
    records = []
    with open(args.input, encoding="utf-8") as f:
        for ln, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise SchemaError(args.input, ln, f"invalid JSON: {e.msg}") from None
            if not isinstance(obj, dict) or not isinstance(obj.get("id"), str) or not isinstance(obj.get("text"), str):
                raise SchemaError(args.input, ln, "expected an object with string 'id' and 'text'")
            records.append(obj)
    entries, excluded = normalize_external(args.source, records, mapping)
    report = io.StringIO()
    write_jsonl((x.to_json() for x in excluded), report)
    if args.exclusions:
        Path(args.exclusions).write_text(report.getvalue(), encoding="utf-8")
    else:
        sys.stderr.write(report.getvalue())
    out = io.StringIO()
    write_jsonl((e.to_json() for e in entries), out)
    return out.getvalue(), EXIT_OK


# --- perturb ------------------------------------------------------------------


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def cmd_perturb(args) -> tuple[str, int]:
    try:
        spec = PerturbSpec(args.sub, args.ins, args.delete, args.drop, args.shift, args.jitter, args.seed)
    except ValueError as e:
        raise CliError(str(e), EXIT_CONTENT) from None
    try:
        entries = load_manifest(args.manifest)
    except ParseFailure as e:
        raise CliError(f"{args.manifest}: {e}", EXIT_CONTENT) from None
    out = io.StringIO()
    items = sorted(((e.id, e.parsed()) for e in entries), key=lambda x: x[0])
    write_jsonl(({"id": i, "text": serialize(t)} for i, t in perturb_corpus(items, spec)), out)
    return out.getvalue(), EXIT_OK


# --- entry point --------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wesr", description="Word-level event-speech recognition scoring toolkit.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def fmt(sp, default="markdown"):
        sp.add_argument("--format", choices=("json", "markdown", "csv"), default=default)

    def mode(sp):
        g = sp.add_mutually_exclusive_group()
        g.add_argument("--strict", dest="strict", action="store_true", help="reject malformed hypotheses")
        g.add_argument("--lenient", dest="strict", action="store_false", help="repair malformed hypotheses (default)")
        sp.set_defaults(strict=False)

    sp = sub.add_parser("validate", help="strict-check every transcript in a manifest")
    sp.add_argument("manifest")
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("score", help="event P/R/F1 of hypotheses against a reference manifest")
    sp.add_argument("--ref", required=True, help="reference manifest (JSONL)")
    sp.add_argument("--hyp", required=True, help="hypothesis file (JSONL of id, text)")
    fmt(sp)
    mode(sp)
    sp.add_argument("--aggregate", action="store_true", help="add the 7-category section")
    sp.add_argument("--kinds", action="store_true", help="add the discrete/continuous section")
    sp.add_argument("--lang", choices=("en", "zh", "mixed"))
    sp.add_argument("--jobs", type=int, default=1, help="worker threads")
    sp.set_defaults(func=cmd_score)

    sp = sub.add_parser("wer", help="word error rate with event tags removed")
    sp.add_argument("--ref", required=True)
    sp.add_argument("--hyp", required=True)
    sp.add_argument("--lang", choices=("en", "zh", "mixed"))
    fmt(sp)
    sp.set_defaults(func=cmd_wer)

    sp = sub.add_parser("stats", help="tag statistics of a manifest")
    sp.add_argument("manifest")
    fmt(sp)
    sp.set_defaults(func=cmd_stats)

    sp = sub.add_parser("align", help="align one tagged hypothesis onto a reference transcript")
    sp.add_argument("--ref", required=True, help="reference transcript text")
    sp.add_argument("--hyp", required=True, help="hypothesis transcript text")
    sp.add_argument("--debug", action="store_true", help="print the edit-op trace")
    fmt(sp)
    mode(sp)
    sp.set_defaults(func=cmd_align)

    sp = sub.add_parser("normalize", help="convert a prior dataset's records into a manifest")
    sp.add_argument("input", help="JSONL records with id and text")
    sp.add_argument("--from", dest="source", required=True, choices=tuple(DATASETS))
    sp.add_argument("--mapping", help="JSON object of 'dataset/raw_tag' -> tag name or EXCLUDE")
    sp.add_argument("--exclusions", help="write the exclusion report here instead of stderr")
    sp.set_defaults(func=cmd_normalize)

    sp = sub.add_parser("perturb", help="generate seeded synthetic hypotheses from a manifest")
    sp.add_argument("manifest")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--sub", type=float, default=0.0, help="word substitution rate")
    sp.add_argument("--ins", type=float, default=0.0, help="word insertion rate")
    sp.add_argument("--del", dest="delete", type=float, default=0.0, help="word deletion rate")
    sp.add_argument("--drop", type=float, default=0.0, help="tag drop probability")
    sp.add_argument("--shift", type=_int_list, default=(0,), help="discrete gap offsets, e.g. -1,0,1")
    sp.add_argument("--jitter", type=_int_list, default=(0,), help="span endpoint deltas, e.g. -1,0,1")
    sp.set_defaults(func=cmd_perturb)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        text, code = args.func(args)
    except CliError as e:
        print(f"wesr: {e}", file=sys.stderr)
        return e.code
    except (OSError, SchemaError, DuplicateId, CorpusError, TaxonomyError, json.JSONDecodeError, UnicodeDecodeError) as e:
        print(f"wesr: {e}", file=sys.stderr)
        return EXIT_IO
    sys.stdout.write(text)
    sys.stdout.flush()
    return code


if __name__ == "__main__":
    sys.exit(main())
