"""Experiment runner: sweeps (method, K_R) cells over a corpus + embedding
store, producing per-cell MAP@K / Re@K summaries, rank-transition counts, and
machine-readable report files. With mock clients the whole run is a pure
function of the config, so repeated runs are byte-identical."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from . import llmclient, rerank
from .corpus import Corpus, queries_with_min_aspects
from .embedstore import EmbeddingStore
from .evaluation import (QueryResult, average_precision_at_k, recall_at_k,
                         summarize)
from .fusion import Aggregator, aspect_fusion, monolithic_lf


class ExperimentError(ValueError):
    pass


@dataclass(frozen=True)
class MethodSpec:
    """"mono" or an aspect-fusion aggregator ("af:amean", "af:borda", ...)."""

    kind: str                      # "mono" | "af"
    aggregator: Aggregator | None = None

    @classmethod
    def from_string(cls, name: str) -> "MethodSpec":
        key = name.strip().lower()
        if key in ("mono", "mono-lf", "monolf"):
            return cls(kind="mono")
        if key.startswith("af:"):
            try:
                return cls(kind="af", aggregator=Aggregator.from_string(key[3:]))
            except ValueError as exc:
                raise ExperimentError(str(exc)) from exc
        raise ExperimentError(f"unknown method {name!r} (use 'mono' or 'af:<aggregator>')")

    @property
    def label(self) -> str:
        return "MonoLF" if self.kind == "mono" else "AF"

    @property
    def aggregator_label(self) -> str:
        return "" if self.aggregator is None else self.aggregator.value


@dataclass
class ExperimentConfig:
    dataset: str
    methods: list[str]
    kr_grid: list[int]
    k_i: int = 10
    aspect_source: str = "gt"          # "gt" | "extracted"
    rerank: str = "none"               # "none" | "ce" | "listwise"
    seed: int = 0
    min_correct_item_aspects: int = 2
    workers: int | None = None         # >1 pays off for network-bound LLM calls,
                                       # not for local scoring (GIL-bound numpy)

    def __post_init__(self) -> None:
        if not self.methods:
            raise ExperimentError("need at least one method")
        if not self.kr_grid or any(k < 1 for k in self.kr_grid):
            raise ExperimentError("K_R values must be >= 1")
        if self.k_i < 1:
            raise ExperimentError("K_I must be >= 1")
        if self.aspect_source not in ("gt", "extracted"):
            raise ExperimentError(f"unknown aspect source {self.aspect_source!r}")
        if self.rerank not in ("none", "ce", "listwise"):
            raise ExperimentError(f"unknown rerank mode {self.rerank!r}")
        [MethodSpec.from_string(m) for m in self.methods]


@dataclass
class RunClients:
    llm: object | None = None
    cross_encoder: rerank.CrossEncoderClient | None = None


@dataclass(frozen=True)
class MetricRow:
    dataset: str
    method: str
    aggregator: str
    k_r: int
    k_i: int
    stage: int
    metric: str
    mean: float
    margin95: float
    n: int


@dataclass(frozen=True)
class TransitionRow:
    dataset: str
    method: str
    aggregator: str
    k_r: int
    rank1: int
    rank2: int
    count: int


@dataclass(frozen=True)
class CellFailure:
    method: str
    k_r: int
    error: str


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    rows: list[MetricRow] = field(default_factory=list)
    transitions: list[TransitionRow] = field(default_factory=list)
    failures: list[CellFailure] = field(default_factory=list)
    results: dict[tuple[str, int], list[QueryResult]] = field(default_factory=dict)
    notes: str = "margin95 = 1.96 * sample stddev / sqrt(n) (normal approximation)"

    def cell_mean(self, method: str, k_r: int, metric: str, stage: int = 1) -> float:
        for row in self.rows:
            label = f"{row.method}:{row.aggregator}" if row.aggregator else row.method
            if (label == method or row.method == method) and row.k_r == k_r \
                    and row.metric == metric and row.stage == stage:
                return row.mean
        raise KeyError((method, k_r, metric, stage))

    def write_csv(self, path: str | Path) -> None:
        lines = ["dataset,method,aggregator,K_R,K_I,stage,metric,mean,margin,n"]
        for r in self.rows:
            lines.append(f"{r.dataset},{r.method},{r.aggregator},{r.k_r},{r.k_i},"
                         f"{r.stage},{r.metric},{r.mean:.6f},{r.margin95:.6f},{r.n}")
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    def write_transitions_csv(self, path: str | Path) -> None:
        lines = ["dataset,method,aggregator,K_R,stage1_rank,stage2_rank,count"]
        for t in self.transitions:
            lines.append(f"{t.dataset},{t.method},{t.aggregator},{t.k_r},"
                         f"{t.rank1},{t.rank2},{t.count}")
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    def write_markdown(self, path: str | Path) -> None:
        cfg = self.config
        out = [f"# Experiment report: {cfg.dataset}", "",
               f"- aspect source: {cfg.aspect_source}; rerank: {cfg.rerank}; "
               f"K_I = {cfg.k_i}; seed = {cfg.seed}",
               f"- {self.notes}", ""]
        stages = sorted({r.stage for r in self.rows})
        for stage in stages:
            out.append(f"## Stage {stage}")
            out.append("")
            header = "| method | " + " | ".join(
                f"K_R={k} MAP@{cfg.k_i} | K_R={k} Re@{cfg.k_i}" for k in cfg.kr_grid) + " |"
            out.append(header)
            out.append("|" + "---|" * (1 + 2 * len(cfg.kr_grid)))
            for method in cfg.methods:
                spec = MethodSpec.from_string(method)
                cells = []
                for k_r in cfg.kr_grid:
                    for metric in (f"MAP@{cfg.k_i}", f"Re@{cfg.k_i}"):
                        row = self._find(spec, k_r, metric, stage)
                        cells.append("failed" if row is None
                                     else f"{row.mean:.2f} ({row.margin95:.2f})")
                label = spec.label + (f"({spec.aggregator_label})" if spec.aggregator_label else "")
                out.append("| " + label + " | " + " | ".join(cells) + " |")
            out.append("")
        if self.failures:
            out.append("## Failed cells")
            out.append("")
            for f in self.failures:
                out.append(f"- {f.method} @ K_R={f.k_r}: {f.error}")
            out.append("")
        Path(path).write_text("\n".join(out), encoding="utf-8")

    def _find(self, spec: MethodSpec, k_r: int, metric: str, stage: int) -> MetricRow | None:
        for row in self.rows:
            if (row.method == spec.label and row.aggregator == spec.aggregator_label
                    and row.k_r == k_r and row.metric == metric and row.stage == stage):
                return row
        return None


def _aspect_probes(config: ExperimentConfig, corpus: Corpus, store: EmbeddingStore,
                   clients: RunClients, query_id: str):
    query = corpus.queries[query_id]
    if config.aspect_source == "gt":
        labels = [a.id for a in query.gt_aspects]
    else:
        if clients.llm is None:
            raise ExperimentError("extracted aspect source needs an LLM client")
        extracted = llmclient.extract_aspects(clients.llm, query.text, query_id)
        labels = [f"{query_id}::ext{j}" for j in range(len(extracted.spans))]
    vecs = []
    for label in labels:
        if label not in store.vectors:
            raise ExperimentError(f"no embedding for aspect {label!r}")
        vecs.append(store.vectors[label])
    return vecs, labels


def run_query(config: ExperimentConfig, corpus: Corpus, store: EmbeddingStore,
              clients: RunClients, spec: MethodSpec, k_r: int, query_id: str) -> QueryResult:
    query = corpus.queries[query_id]
    if spec.kind == "mono":
        if query_id not in store.vectors:
            raise ExperimentError(f"no embedding for query {query_id!r}")
        slist, trace = monolithic_lf(store, store.vectors[query_id], k_r, config.k_i)
    else:
        vecs, labels = _aspect_probes(config, corpus, store, clients, query_id)
        slist, trace = aspect_fusion(store, vecs, k_r, config.k_i,
                                     spec.aggregator, labels=labels)

    stage2 = None
    if config.rerank != "none":
        strategy = "mono" if spec.kind == "mono" else "aspect"
        selected = rerank.select_reviews(trace, strategy, k_r)
        texts = {iid: [corpus.reviews[rid].text for rid in selected[iid]]
                 for iid in slist.ids()}
        rinput = rerank.RerankInput(query_text=query.text, stage1=slist,
                                    reviews_by_item=texts)
        if config.rerank == "ce":
            if clients.cross_encoder is None:
                raise ExperimentError("ce rerank needs a cross-encoder client")
            stage2 = rerank.cross_encoder_rerank(clients.cross_encoder, rinput).ranked
        else:
            if clients.llm is None:
                raise ExperimentError("listwise rerank needs an LLM client")
            stage2 = rerank.listwise_rerank(clients.llm, rinput).ranked

    return QueryResult(query_id=query_id, correct_item_id=query.correct_item_id,
                       stage1=slist, stage2=stage2)


def run_experiment(config: ExperimentConfig, corpus: Corpus, store: EmbeddingStore,
                   clients: RunClients | None = None) -> ExperimentReport:
    """Evaluate every (method, K_R) cell; failed cells are recorded and the
    rest complete. Queries run in a worker pool and are merged in id order, so
    output does not depend on pool size."""
    clients = clients or RunClients()
    report = ExperimentReport(config=config)
    query_ids = queries_with_min_aspects(corpus, config.min_correct_item_aspects)
    if not query_ids:
        raise ExperimentError("no queries left after the aspect-count filter")
    workers = config.workers or 1

    for method in config.methods:
        spec = MethodSpec.from_string(method)
        for k_r in config.kr_grid:
            try:
                if workers > 1:
                    with ThreadPoolExecutor(max_workers=workers) as pool:
                        results = list(pool.map(
                            lambda qid: run_query(config, corpus, store, clients, spec, k_r, qid),
                            query_ids))
                else:
                    results = [run_query(config, corpus, store, clients, spec, k_r, qid)
                               for qid in query_ids]
            except llmclient.LlmUnavailableError:
                raise
            except Exception as exc:
                report.failures.append(CellFailure(method=method, k_r=k_r,
                                                   error=f"{type(exc).__name__}: {exc}"))
                continue

            report.results[(method, k_r)] = results
            stages: list[tuple[int, list[float], list[float]]] = []
            ap1 = [average_precision_at_k(r.stage1, r.correct_item_id, config.k_i) for r in results]
            re1 = [recall_at_k(r.stage1, r.correct_item_id, config.k_i) for r in results]
            stages.append((1, ap1, re1))
            if config.rerank != "none":
                ap2 = [average_precision_at_k(r.stage2, r.correct_item_id, config.k_i) for r in results]
                re2 = [recall_at_k(r.stage2, r.correct_item_id, config.k_i) for r in results]
                stages.append((2, ap2, re2))
                counts: dict[tuple[int, int], int] = {}
                for r in results:
                    r1, r2 = r.rank1, r.rank2
                    if r1 is not None and r2 is not None:
                        counts[(r1, r2)] = counts.get((r1, r2), 0) + 1
                for (r1, r2) in sorted(counts):
                    report.transitions.append(TransitionRow(
                        dataset=config.dataset, method=spec.label,
                        aggregator=spec.aggregator_label, k_r=k_r,
                        rank1=r1, rank2=r2, count=counts[(r1, r2)]))
            for stage, ap, re_ in stages:
                for metric, values in ((f"MAP@{config.k_i}", ap), (f"Re@{config.k_i}", re_)):
                    if len(values) >= 2:
                        summary = summarize(values, metric)
                        mean, margin = summary.mean, summary.margin95
                    else:
                        mean, margin = float(values[0]), 0.0
                    report.rows.append(MetricRow(
                        dataset=config.dataset, method=spec.label,
                        aggregator=spec.aggregator_label, k_r=k_r, k_i=config.k_i,
                        stage=stage, metric=metric, mean=mean,
                        margin95=margin, n=len(values)))
    return report
