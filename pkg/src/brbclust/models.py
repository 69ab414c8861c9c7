"""
Serialized records of an experiment run.

Every record carries a ``kind`` tag so a JSONL log can interleave metric records and
BRB events. Wall-clock values live in ``timings`` sub-objects (and ``phase_seconds``
/ ``epoch_seconds`` on the log) so they can be stripped before comparing two runs.
"""
from typing import Any, Literal

from pydantic import BaseModel, Field

from .types_ import Algorithm, Variant

SCHEMA_VERSION = 1

TIMING_KEYS = frozenset({'timings', 'phase_seconds', 'epoch_seconds'})


class DistanceRatioHistogram(BaseModel):
    """Histogram of rho = d1 / d2 over [0, 1]."""
    epoch: int | None = None
    tag: str | None = None
    edges: list[float]
    counts: list[int]

    @property
    def total(self) -> int:
        return sum(self.counts)


class EpochTimings(BaseModel):
    epoch_seconds: float = 0.0
    eval_seconds: float = 0.0


class MetricRecord(BaseModel):
    """
    Snapshot of one evaluated epoch.

    ``acc`` and ``nmi`` are scaled to [0, 100], ``ari`` to [-100, 100]. Label-based
    fields are None for datasets without ground truth; class-distance diagnostics are
    None on epochs where they are not computed.
    """
    kind: Literal['metric'] = 'metric'
    epoch: int = Field(ge=0)
    acc: float | None = None
    nmi: float | None = None
    ari: float | None = None
    intra_cd: float | None = None
    inter_cd: float | None = None
    silhouette: float | None = None
    cl_change: float
    loss_total: float
    loss_ssl: float
    loss_cluster: float
    decoder_grad_norm: float
    brb_applied: bool = False
    timings: EpochTimings = Field(default_factory=EpochTimings)


class BrbTimings(BaseModel):
    reset_seconds: float = 0.0
    embed_seconds: float = 0.0
    cluster_seconds: float = 0.0
    momentum_seconds: float = 0.0

    @property
    def total(self) -> float:
        return self.reset_seconds + self.embed_seconds + self.cluster_seconds + self.momentum_seconds


class BrbEvent(BaseModel):
    kind: Literal['brb_event'] = 'brb_event'
    epoch: int = Field(ge=1)
    variant: Variant
    subsample_size: int = 0
    reset_tensors: list[str] = Field(default_factory=list)
    momentum_reset_tensors: list[str] = Field(default_factory=list)
    centroid_shift: float | None = None
    rho_before: DistanceRatioHistogram | None = None
    rho_after: DistanceRatioHistogram | None = None
    timings: BrbTimings = Field(default_factory=BrbTimings)


class RunSummary(BaseModel):
    kind: Literal['summary'] = 'summary'
    final_epoch: int
    best_acc: float | None = None
    last_acc: float | None = None
    last_nmi: float | None = None
    last_ari: float | None = None
    brb_events: int = 0


class LogHeader(BaseModel):
    kind: Literal['header'] = 'header'
    schema_version: int = SCHEMA_VERSION
    label: str
    seed: int
    algorithm: Algorithm
    config: dict[str, Any]


class ExperimentLog(BaseModel):
    header: LogHeader
    pretrain_losses: list[float] = Field(default_factory=list)
    records: list[MetricRecord] = Field(default_factory=list)
    events: list[BrbEvent] = Field(default_factory=list)
    summary: RunSummary | None = None
    phase_seconds: dict[str, float] = Field(default_factory=dict)
    epoch_seconds: list[float] = Field(default_factory=list)

    @property
    def interval(self) -> int:
        return int(self.header.config.get('brb', {}).get('interval', 0))

    def summarize(self) -> RunSummary:
        accs = [r.acc for r in self.records if r.acc is not None]
        last = self.records[-1] if self.records else None
        self.summary = RunSummary(
            final_epoch=last.epoch if last else -1,
            best_acc=max(accs) if accs else None,
            last_acc=last.acc if last else None,
            last_nmi=last.nmi if last else None,
            last_ari=last.ari if last else None,
            brb_events=len(self.events))
        return self.summary


class MetricStat(BaseModel):
    mean: float
    std: float


class SuiteRow(BaseModel):
    """
    Aggregate of one config over its seeds.

    ``missing`` is set when at least one run failed; ``errors`` holds their messages.
    """
    label: str
    runs: int
    failed: int = 0
    missing: bool = False
    errors: list[str] = Field(default_factory=list)
    metrics: dict[str, MetricStat] = Field(default_factory=dict)
    delta: dict[str, float] | None = None
    relative: dict[str, float | None] | None = None


class EventTiming(BaseModel):
    epoch: int
    reset_seconds: float
    embed_seconds: float
    cluster_seconds: float
    momentum_seconds: float
    total_seconds: float


class TimingReport(BaseModel):
    interval: int
    events: list[EventTiming] = Field(default_factory=list)
    mean_epoch_seconds: float = 0.0
    mean_brb_seconds: float = 0.0
    clustering_seconds: float = 0.0
    brb_seconds: float = 0.0
    brb_share: float = 0.0
    overhead: float = 0.0


class SweepPoint(BaseModel):
    subsample: int
    last_acc: float | None
    mean_cluster_seconds: float
    overhead: float
