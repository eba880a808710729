"""Dataset I/O, metrics, and experiment runners.

Datasets are line-delimited JSON records {id, prompt, references}; outputs
mirror the input plus {prediction, metrics, trace_summary, error}. The
sweep runner produces one aggregate row per axis value plus the full
per-item records, and exports JSON or CSV for plotting.

The translation metric is standard corpus-level BLEU-4 on whitespace
tokens with brevity penalty and unsmoothed (add-0) clipped counts; it
stands in for subword-based BLEU variants, and reports flag it as
``bleu4_whitespace`` to avoid implying comparability with those.
"""

from __future__ import annotations

import io
import json
import math
import re
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

from .engine import DecodeConfig, DecodeError, DecodeTrace, decode
from .lm_core import AdaFuseError, ConfigError, LanguageModel

BLEU_METRIC_NAME = "bleu4_whitespace"

SWEEP_AXES = ("tau_delta", "branching_factor", "mode")

_WS_RE = re.compile(r"\s+")
_TERMINAL_PUNCT = ".!?"


# ---------------------------------------------------------------------------
# metrics


def normalize_answer(text: str) -> str:
    """Open-domain QA answer normalization: lowercase, collapse whitespace,
    strip outer whitespace and trailing terminal punctuation."""
    text = _WS_RE.sub(" ", text.lower()).strip()
    previous = None
    while text != previous:  # "x? !" needs both passes
        previous = text
        text = text.rstrip(_TERMINAL_PUNCT).strip()
    return text


def exact_match(prediction: str, references: Sequence[str]) -> int:
    """1 iff the normalized prediction equals any normalized reference."""
    pred = normalize_answer(prediction)
    if not pred:
        return 0
    return int(any(pred == normalize_answer(ref) for ref in references))


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(
        tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1)
    )


def bleu(
    predictions: Sequence[str],
    references: Sequence[Sequence[str] | str],
    *,
    max_order: int = 4,
) -> float:
    """Corpus-level BLEU with uniform n-gram weights and brevity penalty.

    ``references`` holds one reference string or a list of alternatives per
    prediction. Clipping is exact (no smoothing): any order with zero
    matches over the whole corpus gives a score of zero.
    """
    if len(predictions) != len(references):
        raise ValueError(
            f"{len(predictions)} predictions vs {len(references)} references"
        )
    if not predictions:
        raise ValueError("bleu needs at least one prediction")
    clipped = [0] * max_order
    totals = [0] * max_order
    pred_len = 0
    ref_len = 0
    for prediction, refs in zip(predictions, references):
        ref_list = [refs] if isinstance(refs, str) else list(refs)
        if not ref_list:
            raise ValueError("every prediction needs at least one reference")
        pred_tokens = prediction.split()
        pred_len += len(pred_tokens)
        ref_lengths = [len(r.split()) for r in ref_list]
        # closest reference length; ties favor the shorter reference
        ref_len += min(
            ref_lengths, key=lambda rl: (abs(rl - len(pred_tokens)), rl)
        )
        for n in range(1, max_order + 1):
            pred_counts = _ngrams(pred_tokens, n)
            if not pred_counts:
                continue
            max_ref: Counter = Counter()
            for ref in ref_list:
                for gram, count in _ngrams(ref.split(), n).items():
                    if count > max_ref[gram]:
                        max_ref[gram] = count
            clipped[n - 1] += sum(
                min(count, max_ref[gram]) for gram, count in pred_counts.items()
            )
            totals[n - 1] += sum(pred_counts.values())
    if pred_len == 0 or any(t == 0 for t in totals):
        return 0.0
    if any(c == 0 for c in clipped):
        return 0.0
    log_precision = sum(
        math.log(c / t) for c, t in zip(clipped, totals)
    ) / max_order
    brevity = 1.0 if pred_len > ref_len else math.exp(1.0 - ref_len / pred_len)
    return brevity * math.exp(log_precision)


def words_per_round_histogram(
    traces: Iterable[DecodeTrace], *, max_words: int = 3
) -> list[float]:
    """Percentage shares of rounds committing 1..max_words words.

    Pure-EOS rounds (zero words committed) are excluded. Shares sum to 100.
    """
    counts: Counter = Counter()
    for trace in traces:
        for words in trace.words_per_round():
            if words > max_words:
                raise ValueError(
                    f"round committed {words} words, above the cap {max_words}"
                )
            counts[words] += 1
    total = sum(counts.values())
    if total == 0:
        raise ValueError("no word-committing rounds in the given traces")
    return [100.0 * counts.get(n, 0) / total for n in range(1, max_words + 1)]


def truncate_at_stop(text: str, stop_sequences: Sequence[str]) -> str:
    """Cut text at the first occurrence of any stop sequence."""
    cut = len(text)
    for stop in stop_sequences:
        if not stop:
            continue
        at = text.find(stop)
        if at != -1:
            cut = min(cut, at)
    return text[:cut]


def compose_few_shot_prompt(
    exemplars: Sequence[tuple[str, str]],
    question: str,
    *,
    item_template: str = "Q: {question} A: {answer}",
    query_template: str = "Q: {question} A:",
    separator: str = "\n",
) -> str:
    """Concatenate k-shot exemplars and the query with a fixed template."""
    parts = [
        item_template.format(question=q, answer=a) for q, a in exemplars
    ]
    parts.append(query_template.format(question=question))
    return separator.join(parts)


# ---------------------------------------------------------------------------
# records


@dataclass
class EvalRecord:
    id: str
    prompt: str
    references: list[str] = field(default_factory=list)
    prediction: str = ""
    metrics: dict[str, float] = field(default_factory=dict)
    trace_summary: dict = field(default_factory=dict)
    error: str | None = None

    def to_dict(self) -> dict:
        out = {
            "id": self.id,
            "prompt": self.prompt,
            "references": self.references,
            "prediction": self.prediction,
            "metrics": self.metrics,
            "trace_summary": self.trace_summary,
        }
        if self.error is not None:
            out["error"] = self.error
        return out


def parse_record(raw: dict) -> EvalRecord:
    if "id" not in raw or "prompt" not in raw:
        raise ValueError("record needs 'id' and 'prompt' fields")
    return EvalRecord(
        id=str(raw["id"]),
        prompt=str(raw["prompt"]),
        references=[str(r) for r in raw.get("references", [])],
        prediction=str(raw.get("prediction", "")),
        metrics={k: float(v) for k, v in raw.get("metrics", {}).items()},
        trace_summary=dict(raw.get("trace_summary", {})),
        error=raw.get("error"),
    )


def read_records(path: str | Path, *, strict: bool = True) -> list[EvalRecord]:
    """Read line-delimited records. In lenient mode a malformed line yields
    a placeholder record with its error field populated."""
    records = []
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(parse_record(json.loads(line)))
            except (json.JSONDecodeError, ValueError) as exc:
                if strict:
                    raise ConfigError(
                        f"{path}:{lineno}: malformed record: {exc}"
                    ) from exc
                records.append(
                    EvalRecord(
                        id=f"line{lineno}",
                        prompt="",
                        error=f"malformed record: {exc}",
                    )
                )
    return records


def write_records(records: Iterable[EvalRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for record in records:
            handle.write(
                json.dumps(record.to_dict(), ensure_ascii=False, sort_keys=True)
            )
            handle.write("\n")


# ---------------------------------------------------------------------------
# decode runner


def summarize_trace(trace: DecodeTrace) -> dict:
    return {
        "mode": trace.mode,
        "stop_reason": trace.stop_reason,
        "rounds": len(trace.rounds),
        "words": trace.words,
        "words_per_round": trace.words_per_round(),
        "pool_sizes": [len(r.pooled) for r in trace.rounds],
        "triggers": [
            sorted({m.trigger for m in r.per_model}) for r in trace.rounds
        ],
        "forward_calls": trace.provider_forward_calls,
        "scoring_calls": trace.scoring_calls,
    }


def run_record(
    record: EvalRecord,
    models: Sequence[LanguageModel],
    config: DecodeConfig,
) -> tuple[EvalRecord, DecodeTrace | None]:
    """Decode one record; failures are captured on the record, not raised."""
    out = replace(record, prediction="", metrics={}, trace_summary={}, error=record.error)
    if record.error is not None:
        return out, None
    try:
        _, trace = decode(record.prompt, models, config)
    except DecodeError as exc:
        out.error = str(exc)
        out.prediction = truncate_at_stop(
            exc.trace.generated, config.stop_sequences
        )
        out.trace_summary = summarize_trace(exc.trace)
        trace = None
    except AdaFuseError as exc:
        out.error = str(exc)
        return out, None
    else:
        out.prediction = truncate_at_stop(
            trace.generated, config.stop_sequences
        )
        out.trace_summary = summarize_trace(trace)
    if out.references:
        out.metrics["exact_match"] = float(
            exact_match(out.prediction, out.references)
        )
    return out, trace


def run_dataset(
    records: Sequence[EvalRecord],
    models: Sequence[LanguageModel],
    config: DecodeConfig,
    *,
    jobs: int = 1,
) -> tuple[list[EvalRecord], list[DecodeTrace | None]]:
    """Decode every record (optionally in parallel); order is preserved and
    independent of worker scheduling."""
    if jobs <= 1:
        results = [run_record(r, models, config) for r in records]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool_:
            results = list(
                pool_.map(lambda r: run_record(r, models, config), records)
            )
    outs = [r for r, _ in results]
    traces = [t for _, t in results]
    return outs, traces


# ---------------------------------------------------------------------------
# sweeps


@dataclass
class SweepReport:
    axis: str
    rows: list[dict]
    records: dict[str, list[EvalRecord]]

    def to_dict(self) -> dict:
        return {"axis": self.axis, "rows": self.rows}

    def to_csv(self) -> str:
        if not self.rows:
            return ""
        columns = [c for c in self.rows[0] if c != "words_per_round_pct"]
        buf = io.StringIO()
        buf.write(",".join(columns) + "\n")
        for row in self.rows:
            buf.write(",".join(str(row.get(c, "")) for c in columns) + "\n")
        return buf.getvalue()


def _config_for(base: DecodeConfig, axis: str, value) -> DecodeConfig:
    if axis == "tau_delta":
        return replace(base, tau_delta=float(value))
    if axis == "branching_factor":
        return replace(base, branching_factor=int(value))
    if axis == "mode":
        return replace(base, mode=str(value))
    raise ConfigError(f"unknown sweep axis {axis!r}; choose from {SWEEP_AXES}")


def run_sweep(
    records: Sequence[EvalRecord],
    models: Sequence[LanguageModel],
    base_config: DecodeConfig,
    axis: str,
    values: Sequence,
    *,
    jobs: int = 1,
) -> SweepReport:
    """Evaluate the dataset once per axis value and aggregate per cell."""
    if not values:
        raise ConfigError("sweep needs at least one value")
    rows = []
    per_value: dict[str, list[EvalRecord]] = {}
    for value in values:
        config = _config_for(base_config, axis, value)
        config.validate()
        outs, traces = run_dataset(records, models, config, jobs=jobs)
        ok_traces = [t for t in traces if t is not None]
        words_per_round = [w for t in ok_traces for w in t.words_per_round()]
        pool_sizes = [n for t in ok_traces for n in (
            len(r.pooled) for r in t.rounds)]
        ems = [
            r.metrics["exact_match"] for r in outs if "exact_match" in r.metrics
        ]
        row: dict = {
            axis: value,
            "items": len(outs),
            "errors": sum(1 for r in outs if r.error),
            "mean_rounds": _mean([len(t.rounds) for t in ok_traces]),
            "mean_words_per_round": _mean(words_per_round),
            "mean_pool_size": _mean(pool_sizes),
            "mean_forward_calls": _mean(
                [t.provider_forward_calls for t in ok_traces]
            ),
        }
        if words_per_round:
            row["words_per_round_pct"] = words_per_round_histogram(
                ok_traces, max_words=base_config.max_words_per_round
            )
        if ems:
            row["exact_match"] = _mean(ems)
        scored = [
            (r.prediction, r.references) for r in outs if r.references
        ]
        if scored:
            row[BLEU_METRIC_NAME] = bleu(
                [p for p, _ in scored], [refs for _, refs in scored]
            )
        rows.append(row)
        per_value[str(value)] = outs
    return SweepReport(axis=axis, rows=rows, records=per_value)


def _mean(values: Sequence[float]) -> float:
    return sum(values) / len(values) if values else 0.0
