"""
Experiment orchestration.

``ExperimentRunner`` drives one (config, seed) pair through pretraining, initial
clustering and the clustering loop with scheduled BRB events. Randomness is split
into named streams below the run seed: ``init-network``, ``pretrain``, ``init``,
``shuffle``, ``augment``, ``brb`` and ``eval``.
"""
import csv
import re
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Iterable

import numpy as np

from .brb import CENTROIDS, apply_brb
from .config import ExperimentConfig, update_config
from .data import Dataset, augment_batch, subsample_indices
from .exceptions import BaseExceptionBRB, ConfigurateException, DataIOException, InputException, NumericalFailure
from .logger import logger, log, format_list_log_preview
from .metrics import ari, cluster_label_change, clustering_accuracy, intra_inter_cd, nmi, silhouette
from .models import (EpochTimings, EventTiming, ExperimentLog, LogHeader, MetricRecord, MetricStat,
                     RunSummary, SuiteRow, SweepPoint, TimingReport)
from .network import NetworkParams, backward, build_specs, encode, forward, init_network, \
    reconstruction_grad, reconstruction_loss
from .numerics import SeededRng
from .objectives import ClusterState, combined_loss_and_grads, dcn_assign, dcn_update_centers, \
    dec_soft_assign, hard_labels
from .optim import AdamState, adam_step
from .recluster import recluster_embeddings
from .settings import config_numerics
from .types_ import Algorithm, DenseMatrix
from .utils import JsonlWriter, strip_timings

SUITE_METRICS = ('last_acc', 'best_acc', 'last_nmi', 'last_ari')


class ExperimentRunner:
    """
    One experiment run.

    :param config: experiment configuration
    :param seed: run seed; every random stream of the run derives from it
    :param dataset: preloaded dataset, loaded from ``config.dataset`` when omitted
    :param log_path: JSONL file receiving records as they are produced
    """

    def __init__(self, config: ExperimentConfig, seed: int,
                 dataset: Dataset | None = None, log_path: str | Path | None = None):
        self.config = config
        self.seed = seed
        self.rng = SeededRng(seed)
        self.dataset = dataset if dataset is not None else config.dataset.load()
        k = config.n_clusters or self.dataset.k
        if k is None:
            raise ConfigurateException(detail={'n_clusters': 'required for datasets without labels'})
        if k > self.dataset.n:
            raise InputException("Fewer samples than clusters", detail={'n': self.dataset.n, 'k': k})
        self.k = k
        self.algorithm: Algorithm = config.algorithm
        self.weights = config.resolved_loss_weights()
        self.brb = config.brb.for_k(k)
        self.params: NetworkParams | None = None
        self.state: ClusterState | None = None
        self.log = ExperimentLog(header=LogHeader(label=config.run_label, seed=seed,
                                                  algorithm=config.algorithm,
                                                  config=config.model_dump(mode='json')))
        self._writer = JsonlWriter(log_path) if log_path is not None else None
        self._emit(self.log.header)

    def _emit(self, record) -> None:
        if self._writer is not None:
            self._writer.write(record)

    def build_network(self) -> NetworkParams:
        embedding_dim = self.config.embedding_dim or self.k
        encoder, decoder = build_specs(self.dataset.dim, self.config.hidden_dims, embedding_dim)
        return init_network(encoder, decoder, self.config.brb.init, self.rng.child('init-network'))

    def _heldout_loss(self, params: NetworkParams, heldout: DenseMatrix, epoch: int) -> float:
        _, reconstruction, _ = forward(params, heldout)
        loss = reconstruction_loss(heldout, reconstruction)
        if not np.isfinite(loss):
            raise NumericalFailure("Pretraining loss is not finite", detail={'phase': 'pretrain', 'epoch': epoch})
        return loss

    def run_pretraining(self, params: NetworkParams | None = None) -> NetworkParams:
        """
        Reconstruction-only training for the resolved number of pretraining epochs.

        A tenth of the data (at least one sample) is held out; its loss is recorded
        before training and after every epoch.
        """
        params = params if params is not None else self.build_network()
        epochs = self.config.resolved_pretrain_epochs()
        if epochs == 0:
            return params
        started = time.perf_counter()
        rng = self.rng.child('pretrain')
        x = self.dataset.x
        order = rng.child('split').permutation(x.shape[0])
        held = max(1, x.shape[0] // 10)
        heldout, train = x[order[:held]], x[order[held:]]
        if train.shape[0] == 0:
            heldout = train = x
        adam = AdamState(learning_rate=self.config.learning_rate)
        losses = [self._heldout_loss(params, heldout, -1)]
        batch_size = self.config.batch_size
        for epoch in range(epochs):
            perm = rng.child(f'epoch-{epoch}').permutation(train.shape[0])
            for start in range(0, train.shape[0], batch_size):
                batch = train[perm[start:start + batch_size]]
                _, reconstruction, cache = forward(params, batch)
                if not np.isfinite(reconstruction_loss(batch, reconstruction)):
                    raise NumericalFailure("Pretraining loss is not finite",
                                           detail={'phase': 'pretrain', 'epoch': epoch})
                grads = backward(params, cache, None, reconstruction_grad(batch, reconstruction))
                adam_step(params.named_tensors(), grads.named_tensors(), adam, self.config.grad_clip)
                params.mark_updated()
            losses.append(self._heldout_loss(params, heldout, epoch))
        if losses[-1] >= losses[0]:
            logger.warning("Pretraining did not improve held-out reconstruction: %.6f -> %.6f",
                           losses[0], losses[-1])
        self.log.pretrain_losses = losses
        self.log.phase_seconds['pretrain'] = time.perf_counter() - started
        self._emit({'kind': 'pretrain', 'losses': losses})
        logger.info("Pretrained %d epochs, held-out loss %.6f -> %.6f", epochs, losses[0], losses[-1])
        return params

    @log()
    def init_clustering(self, params: NetworkParams) -> ClusterState:
        """k-means on the (subsample-capped) embeddings of the full dataset."""
        started = time.perf_counter()
        rng = self.rng.child('init')
        embeddings = encode(params, self.dataset.x)
        idx = subsample_indices(self.dataset.n, self.brb.recluster.subsample, rng.child('subsample'))
        config = self.brb.recluster.model_copy(update={'algorithm': 'kmeans'})
        centroids, _ = recluster_embeddings(embeddings[idx], config, rng.child('recluster'))
        state = ClusterState(centroids=centroids,
                             assignments=hard_labels(self.algorithm, embeddings, centroids))
        if self.algorithm == 'DCN':
            state.reset_counts()
        else:
            state.soft = dec_soft_assign(embeddings, centroids)
        self.log.phase_seconds['init'] = time.perf_counter() - started
        return state

    def _train_epoch(self, params: NetworkParams, adam: AdamState,
                     state: ClusterState, epoch: int) -> tuple[np.ndarray, float]:
        cfg = self.config
        x = self.dataset.x
        n = x.shape[0]
        if self.algorithm == 'DCN' and not cfg.dcn_persist_counts:
            state.reset_counts()
        order = self.rng.child('shuffle').child(epoch).permutation(n)
        augment_rng = self.rng.child('augment').child(epoch)
        sums = np.zeros(3)
        decoder_sq = 0.0
        for b, start in enumerate(range(0, n, cfg.batch_size)):
            batch = x[order[start:start + cfg.batch_size]]
            augmented = None
            if cfg.augmentation.enabled:
                augmented = augment_batch(batch, self.dataset.geometry, cfg.augmentation, augment_rng.child(b))
            result = combined_loss_and_grads(self.algorithm, batch, params, state, self.weights,
                                             augmented, epoch=epoch)
            grads = result.grads.named_tensors()
            decoder_sq += sum(float(np.sum(g * g)) for name, g in grads.items() if name.startswith('decoder.'))
            tensors = params.named_tensors()
            if self.algorithm != 'DCN':
                grads[CENTROIDS] = result.centroid_grads
                tensors[CENTROIDS] = state.centroids
            adam_step(tensors, grads, adam, cfg.grad_clip)
            params.mark_updated()
            if self.algorithm == 'DCN':
                embedded = encode(params, batch)
                dcn_update_centers(state.centroids, state.counts, embedded,
                                   dcn_assign(embedded, state.centroids))
            sums += batch.shape[0] * np.array([result.total, result.ssl, result.cluster])
        return sums / n, float(np.sqrt(decoder_sq))

    def _evaluate(self, params: NetworkParams, state: ClusterState, epoch: int,
                  losses: np.ndarray, decoder_norm: float, brb_applied: bool,
                  previous: np.ndarray, eval_idx: np.ndarray, diagnostics: bool,
                  epoch_seconds: float) -> np.ndarray:
        started = time.perf_counter()
        embeddings = encode(params, self.dataset.x)
        labels = hard_labels(self.algorithm, embeddings, state.centroids)
        state.assignments = labels
        if self.algorithm != 'DCN':
            state.soft = dec_soft_assign(embeddings, state.centroids)
        state.validate()
        y = self.dataset.y_true
        fields = {}
        if y is not None:
            fields.update(acc=clustering_accuracy(y, labels), nmi=100.0 * nmi(y, labels),
                          ari=100.0 * ari(y, labels))
            if diagnostics:
                try:
                    intra, inter = intra_inter_cd(embeddings[eval_idx], y[eval_idx])
                    fields.update(intra_cd=intra, inter_cd=inter,
                                  silhouette=silhouette(embeddings[eval_idx], y[eval_idx]))
                except InputException as e:
                    logger.warning("Class-distance diagnostics skipped at epoch %d: %s", epoch, e)
        record = MetricRecord(epoch=epoch, cl_change=cluster_label_change(labels, previous),
                              loss_total=float(losses[0]), loss_ssl=float(losses[1]),
                              loss_cluster=float(losses[2]), decoder_grad_norm=decoder_norm,
                              brb_applied=brb_applied, **fields)
        record.timings = EpochTimings(epoch_seconds=epoch_seconds,
                                      eval_seconds=time.perf_counter() - started)
        self.log.records.append(record)
        self._emit(record)
        logger.info("epoch %d: acc=%s nmi=%s ari=%s loss=%.6f cl_change=%.3f%s",
                    epoch, _fmt(record.acc), _fmt(record.nmi), _fmt(record.ari),
                    record.loss_total, record.cl_change, ' [BRB]' if brb_applied else '')
        return labels

    def run_clustering(self, params: NetworkParams, state: ClusterState) -> ExperimentLog:
        """
        Clustering epochs ``0 .. E-1``; a BRB event precedes every epoch that is a
        positive multiple of the reset interval. On a numerical failure the partial
        log is written out before the error propagates.
        """
        cfg = self.config
        x = self.dataset.x
        adam = AdamState(learning_rate=cfg.learning_rate)
        eval_idx = subsample_indices(self.dataset.n, config_numerics.eval_subsample, self.rng.child('eval'))
        eval_x = x[eval_idx] if cfg.track_distance_ratio else None
        diagnostics_every = cfg.diagnostics_every or config_numerics.diagnostics_every
        brb_rng = self.rng.child('brb')
        previous = state.assignments if state.assignments is not None else \
            hard_labels(self.algorithm, encode(params, x), state.centroids)
        started = time.perf_counter()
        try:
            for epoch in range(cfg.clustering_epochs):
                brb_applied = False
                if self.brb.due(epoch):
                    params, adam, state, event = apply_brb(params, adam, state, epoch, self.brb, x,
                                                           brb_rng.child(f'epoch-{epoch}'),
                                                           self.algorithm, eval_x)
                    if event is not None:
                        self.log.events.append(event)
                        self._emit(event)
                        brb_applied = True
                epoch_started = time.perf_counter()
                losses, decoder_norm = self._train_epoch(params, adam, state, epoch)
                epoch_seconds = time.perf_counter() - epoch_started
                self.log.epoch_seconds.append(epoch_seconds)
                last = epoch == cfg.clustering_epochs - 1
                if epoch % cfg.eval_every == 0 or last:
                    previous = self._evaluate(params, state, epoch, losses, decoder_norm, brb_applied,
                                              previous, eval_idx, epoch % diagnostics_every == 0 or last,
                                              epoch_seconds)
        except NumericalFailure as e:
            logger.error("Run %s seed %d aborted: %s", cfg.run_label, self.seed, e)
            self._finish(started)
            raise
        self.params, self.state = params, state
        self._finish(started)
        return self.log

    def _finish(self, started: float) -> None:
        self.log.phase_seconds['clustering'] = time.perf_counter() - started
        summary = self.log.summarize()
        self._emit(summary)
        self._emit({'kind': 'timing', 'phase_seconds': self.log.phase_seconds,
                    'epoch_seconds': self.log.epoch_seconds})
        if self._writer is not None:
            self._writer.close()

    def run(self) -> ExperimentLog:
        try:
            params = self.run_pretraining()
            state = self.init_clustering(params)
            return self.run_clustering(params, state)
        finally:
            if self._writer is not None:
                self._writer.close()


def _fmt(value: float | None) -> str:
    return 'n/a' if value is None else f'{value:.2f}'


def _slug(label: str) -> str:
    return re.sub(r'[^A-Za-z0-9._=-]+', '_', label)


def log_path_for(out_dir: str | Path, config: ExperimentConfig, seed: int) -> Path:
    return Path(out_dir) / f'{_slug(config.run_label)}-seed{seed}.jsonl'


def run_experiment(config: ExperimentConfig, seed: int,
                   out_dir: str | Path | None = None) -> RunSummary:
    """Runs one seed; the log goes to ``out_dir`` when given."""
    path = log_path_for(out_dir, config, seed) if out_dir is not None else None
    return ExperimentRunner(config, seed, log_path=path).run().summary


def _aggregate(label: str, summaries: list[RunSummary], errors: list[str]) -> SuiteRow:
    metrics = {}
    for name in SUITE_METRICS:
        values = [getattr(s, name) for s in summaries if getattr(s, name) is not None]
        if values:
            metrics[name] = MetricStat(mean=float(np.mean(values)), std=float(np.std(values)))
    return SuiteRow(label=label, runs=len(summaries) + len(errors), failed=len(errors),
                    missing=bool(errors), errors=errors, metrics=metrics)


@log()
def run_suite(configs: list[ExperimentConfig],
              seeds: Iterable[int] | None = None,
              baseline: str | None = None,
              workers: int = 1,
              out_dir: str | Path | None = None) -> list[SuiteRow]:
    """
    Mean and population std of the summary metrics per config over its seeds.

    Failed runs are counted and flagged, not fatal. With ``baseline`` (a config
    label) every row also gets ``delta = mean - mean(baseline)`` and the relative
    improvement in percent of the baseline mean.

    :param seeds: overrides each config's own seeds
    :param workers: >1 runs (config, seed) pairs in a process pool
    """
    if not configs:
        raise ConfigurateException(detail={'configs': 'at least one config is required'})
    labels = []
    for i, config in enumerate(configs):
        label = config.run_label
        labels.append(label if label not in labels else f'{label}#{i}')
    seeds = list(seeds) if seeds is not None else None
    jobs = [(i, config, seed) for i, config in enumerate(configs)
            for seed in (seeds if seeds is not None else config.seeds)]
    summaries: dict[int, list[RunSummary]] = {i: [] for i in range(len(configs))}
    errors: dict[int, list[str]] = {i: [] for i in range(len(configs))}

    def collect(i: int, seed: int, outcome) -> None:
        try:
            summaries[i].append(outcome())
        except BaseExceptionBRB as e:
            logger.error("Suite run %s seed %d failed: %s", labels[i], seed, e)
            errors[i].append(f'seed {seed}: {e}')

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [(i, seed, pool.submit(run_experiment, config, seed, out_dir)) for i, config, seed in jobs]
            for i, seed, future in futures:
                collect(i, seed, future.result)
    else:
        for i, config, seed in jobs:
            collect(i, seed, lambda: run_experiment(config, seed, out_dir))

    rows = [_aggregate(labels[i], summaries[i], errors[i]) for i in range(len(configs))]
    if baseline is not None:
        base = next((row for row in rows if row.label == baseline), None)
        if base is None:
            raise ConfigurateException(detail={'baseline': f'{baseline} is not a suite label',
                                               'labels': format_list_log_preview(labels)})
        for row in rows:
            row.delta, row.relative = {}, {}
            for name, stat in row.metrics.items():
                if name not in base.metrics:
                    continue
                reference = base.metrics[name].mean
                row.delta[name] = stat.mean - reference
                row.relative[name] = 100.0 * row.delta[name] / abs(reference) if reference else None
    return rows


def write_summary_csv(rows: list[SuiteRow], path: str | Path) -> Path:
    path = Path(path)
    header = ['label', 'runs', 'failed', 'missing']
    for name in SUITE_METRICS:
        header += [f'{name}_mean', f'{name}_std', f'{name}_delta', f'{name}_relative']
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open('w', newline='') as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for row in rows:
                line = [row.label, row.runs, row.failed, row.missing]
                for name in SUITE_METRICS:
                    stat = row.metrics.get(name)
                    line += [stat.mean if stat else '', stat.std if stat else '',
                             (row.delta or {}).get(name, ''),
                             '' if (row.relative or {}).get(name) is None else row.relative[name]]
                writer.writerow(line)
    except OSError as e:
        raise DataIOException("Cannot write summary", detail={'path': str(path), 'error': str(e)}) from e
    return path


def export_embeddings(params: NetworkParams, dataset: Dataset, state: ClusterState,
                      algorithm: Algorithm, path: str | Path) -> Path:
    """
    Writes ``n`` rows of ``embedding..., true label, predicted label`` as CSV.

    Labels are -1 when the dataset has none. Values round-trip exactly.
    """
    embeddings = encode(params, dataset.x)
    predicted = hard_labels(algorithm, embeddings, state.centroids)
    truth = dataset.y_true if dataset.y_true is not None else np.full(dataset.n, -1)
    table = np.column_stack([embeddings, truth, predicted])
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        np.savetxt(path, table, delimiter=',', fmt='%.17g')
    except OSError as e:
        raise DataIOException("Cannot write embeddings", detail={'path': str(path), 'error': str(e)}) from e
    return path


def timing_report(log: ExperimentLog) -> TimingReport:
    """
    BRB cost per event and amortized over the reset interval.

    ``overhead = (T * E + B) / (T * E) - 1`` with E the mean epoch time and B the mean
    event time; ``brb_share`` is the plain fraction of BRB time in the clustering phase.
    """
    events = [EventTiming(epoch=e.epoch, reset_seconds=e.timings.reset_seconds,
                          embed_seconds=e.timings.embed_seconds,
                          cluster_seconds=e.timings.cluster_seconds,
                          momentum_seconds=e.timings.momentum_seconds,
                          total_seconds=e.timings.total)
              for e in log.events]
    interval = log.interval or 1
    report = TimingReport(interval=interval, events=events)
    if log.epoch_seconds:
        report.mean_epoch_seconds = float(np.mean(log.epoch_seconds))
        report.clustering_seconds = float(np.sum(log.epoch_seconds))
    if events:
        report.mean_brb_seconds = float(np.mean([e.total_seconds for e in events]))
        report.brb_seconds = float(np.sum([e.total_seconds for e in events]))
    total = report.brb_seconds + report.clustering_seconds
    report.brb_share = report.brb_seconds / total if total > 0 else 0.0
    amortized = interval * report.mean_epoch_seconds
    if events and amortized > 0:
        report.overhead = (amortized + report.mean_brb_seconds) / amortized - 1.0
    return report


def subsample_sweep(config: ExperimentConfig, sizes: Iterable[int], seed: int = 0,
                    dataset: Dataset | None = None) -> list[SweepPoint]:
    """Accuracy and reclustering cost for each BRB subsample size."""
    dataset = dataset if dataset is not None else config.dataset.load()
    points = []
    for size in sizes:
        variant = update_config(config, {'brb.recluster.subsample': size})
        log = ExperimentRunner(variant, seed, dataset=dataset).run()
        report = timing_report(log)
        cluster = [e.cluster_seconds for e in report.events]
        points.append(SweepPoint(subsample=size, last_acc=log.summary.last_acc,
                                 mean_cluster_seconds=float(np.mean(cluster)) if cluster else 0.0,
                                 overhead=report.overhead))
    return points


def same_log(a: ExperimentLog, b: ExperimentLog) -> bool:
    """Equality of two logs ignoring wall-clock fields."""
    return strip_timings(a.model_dump(mode='json')) == strip_timings(b.model_dump(mode='json'))


