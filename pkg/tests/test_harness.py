import numpy as np
import pytest

import brbclust.harness as harness
from brbclust.cli import main
from brbclust.config import update_config
from brbclust.data import Dataset, subsample_indices
from brbclust.exceptions import ConfigurateException, NumericalFailure
from brbclust.harness import (ExperimentRunner, export_embeddings, log_path_for, run_suite, same_log,
                              subsample_sweep, timing_report, write_summary_csv)
from brbclust.models import BrbEvent, BrbTimings, ExperimentLog, LogHeader
from brbclust.network import encode
from brbclust.numerics import SeededRng
from brbclust.objectives import hard_labels
from brbclust.recluster import recluster_embeddings
from brbclust.utils import iter_jsonl, read_log, strip_timings


def _lines(path) -> list[dict]:
    return [strip_timings(item) for item in iter_jsonl(path)]


def test_run_schedule_and_records(tiny_config):
    log = ExperimentRunner(tiny_config, 0).run()
    assert [r.epoch for r in log.records] == list(range(5))
    assert [e.epoch for e in log.events] == [2, 4]
    assert [r.brb_applied for r in log.records] == [False, False, True, False, True]
    assert log.summary.brb_events == 2
    assert log.summary.final_epoch == 4
    assert log.summary.best_acc >= log.summary.last_acc
    assert len(log.pretrain_losses) == 3


def test_event_count_formula(tiny_config):
    config = update_config(tiny_config, {'clustering_epochs': 7, 'brb.interval': 3, 'pretrain_epochs': 0})
    log = ExperimentRunner(config, 0).run()
    assert len(log.events) == (7 - 1) // 3


def test_dec_decoder_gradient_is_zero(tiny_config):
    log = ExperimentRunner(tiny_config, 0).run()
    assert all(r.decoder_grad_norm == 0.0 for r in log.records)
    idec = ExperimentRunner(update_config(tiny_config, {'algorithm': 'IDEC'}), 0).run()
    assert all(r.decoder_grad_norm > 0.0 for r in idec.records)


def test_variant_off_has_no_events(tiny_config):
    log = ExperimentRunner(update_config(tiny_config, {'brb.variant': 'off'}), 0).run()
    assert log.events == []
    assert not any(r.brb_applied for r in log.records)


def test_run_is_deterministic(tiny_config, tmp_path):
    a = ExperimentRunner(tiny_config, 1, log_path=tmp_path / 'a.jsonl').run()
    b = ExperimentRunner(tiny_config, 1, log_path=tmp_path / 'b.jsonl').run()
    assert same_log(a, b)
    assert _lines(tmp_path / 'a.jsonl') == _lines(tmp_path / 'b.jsonl')
    other = ExperimentRunner(tiny_config, 2).run()
    assert not same_log(a, other)


@pytest.mark.parametrize('algorithm', ['IDEC', 'DCN'])
def test_algorithms_with_jitter_augmentation(tiny_config, algorithm):
    config = update_config(tiny_config, {'algorithm': algorithm, 'augmentation.enabled': True,
                                         'augmentation.jitter_std': 0.05})
    runner = ExperimentRunner(config, 0)
    log = runner.run()
    assert len(log.records) == 5
    if algorithm == 'DCN':
        assert runner.state.counts.min() >= 1
    else:
        assert np.allclose(runner.state.soft.sum(axis=1), 1.0)


def test_pretraining_improves_reconstruction(tiny_config):
    config = update_config(tiny_config, {'pretrain_epochs': 50})
    runner = ExperimentRunner(config, 0)
    runner.run_pretraining()
    assert runner.log.pretrain_losses[-1] < runner.log.pretrain_losses[0]


def test_no_pretraining_returns_fresh_network(tiny_config):
    runner = ExperimentRunner(update_config(tiny_config, {'scenario': 2, 'pretrain_epochs': None}), 0)
    params = runner.run_pretraining()
    fresh = runner.build_network()
    assert np.array_equal(params.encoder[0].weights, fresh.encoder[0].weights)
    assert runner.log.pretrain_losses == []


def test_init_clustering_matches_recluster(tiny_config):
    runner = ExperimentRunner(tiny_config, 0)
    params = runner.build_network()
    state = runner.init_clustering(params)
    rng = SeededRng(0).child('init')
    embeddings = encode(params, runner.dataset.x)
    idx = subsample_indices(runner.dataset.n, 60, rng.child('subsample'))
    centroids, _ = recluster_embeddings(embeddings[idx], runner.brb.recluster, rng.child('recluster'))
    assert np.array_equal(state.centroids, centroids)
    assert state.k == 3


def test_label_free_dataset(tiny_config, rng):
    dataset = Dataset('unlabelled', rng.normal((60, 6)))
    with pytest.raises(ConfigurateException):
        ExperimentRunner(tiny_config, 0, dataset=dataset)
    log = ExperimentRunner(update_config(tiny_config, {'n_clusters': 3}), 0, dataset=dataset).run()
    assert all(r.acc is None and r.nmi is None for r in log.records)
    assert log.summary.best_acc is None
    assert all(r.cl_change >= 0 for r in log.records)


def test_partial_log_is_flushed(tiny_config, tmp_path, monkeypatch):
    def explode(*args, **kwargs):
        raise NumericalFailure("Loss is not finite", detail={'epoch': kwargs.get('epoch')})

    monkeypatch.setattr(harness, 'combined_loss_and_grads', explode)
    path = tmp_path / 'partial.jsonl'
    with pytest.raises(NumericalFailure) as info:
        ExperimentRunner(tiny_config, 0, log_path=path).run()
    assert info.value.exit_code == 3
    kinds = [item['kind'] for item in iter_jsonl(path)]
    assert kinds == ['header', 'pretrain', 'summary', 'timing']


def test_log_round_trip(tiny_config, tmp_path):
    path = tmp_path / 'run.jsonl'
    log = ExperimentRunner(tiny_config, 0, log_path=path).run()
    loaded = read_log(path)
    assert same_log(log, loaded)
    assert loaded.header.schema_version == 1
    assert loaded.interval == 2


def test_export_embeddings(tiny_config, tmp_path):
    runner = ExperimentRunner(tiny_config, 0)
    runner.run()
    path = export_embeddings(runner.params, runner.dataset, runner.state, 'DEC', tmp_path / 'emb.csv')
    table = np.loadtxt(path, delimiter=',')
    embeddings = encode(runner.params, runner.dataset.x)
    assert table.shape == (runner.dataset.n, 3 + 2)
    assert np.max(np.abs(table[:, :3] - embeddings)) <= 1e-12
    assert np.array_equal(table[:, 3], runner.dataset.y_true)
    assert np.array_equal(table[:, 4], hard_labels('DEC', embeddings, runner.state.centroids))


def test_suite_statistics(tiny_config, tmp_path):
    base = update_config(tiny_config, {'label': 'base', 'brb.variant': 'off'})
    single = update_config(tiny_config, {'label': 'one', 'seeds': [0]})
    rows = run_suite([base, tiny_config, single], baseline='base', out_dir=tmp_path)
    by_label = {row.label: row for row in rows}
    assert by_label['one'].metrics['last_acc'].std == 0.0
    accs = [read_log(log_path_for(tmp_path, base, s)).summary.last_acc for s in (0, 1)]
    assert by_label['base'].metrics['last_acc'].mean == pytest.approx(np.mean(accs))
    brb = by_label[tiny_config.run_label]
    assert brb.delta['last_acc'] == pytest.approx(brb.metrics['last_acc'].mean - np.mean(accs))
    assert by_label['base'].delta['last_acc'] == 0.0
    csv_path = write_summary_csv(rows, tmp_path / 'summary.csv')
    assert len(csv_path.read_text().splitlines()) == 4


def test_suite_flags_failed_runs(tiny_config):
    broken = update_config(tiny_config, {'label': 'broken', 'dataset.kind': 'csv',
                                         'dataset.path': '/nonexistent/data.csv'})
    rows = run_suite([tiny_config, broken], seeds=[0])
    assert rows[0].failed == 0 and not rows[0].missing
    assert rows[1].failed == 1 and rows[1].missing
    assert rows[1].metrics == {}


def test_suite_duplicate_labels_and_unknown_baseline(tiny_config):
    rows = run_suite([tiny_config, tiny_config], seeds=[0])
    assert rows[0].label != rows[1].label
    with pytest.raises(ConfigurateException):
        run_suite([tiny_config], seeds=[0], baseline='nobody')


def test_timing_report_amortized_overhead():
    events = [BrbEvent(epoch=20 * i, variant='brb',
                       timings=BrbTimings(reset_seconds=0.25, embed_seconds=0.25,
                                          cluster_seconds=0.25, momentum_seconds=0.25))
              for i in (1, 2, 3)]
    log = ExperimentLog(header=LogHeader(label='synthetic', seed=0, algorithm='DEC',
                                         config={'brb': {'interval': 20}}),
                        events=events, epoch_seconds=[1.0] * 80)
    report = timing_report(log)
    assert report.overhead == pytest.approx(0.05)
    assert report.mean_brb_seconds == pytest.approx(1.0)
    assert report.brb_share == pytest.approx(3.0 / 83.0)
    assert [e.total_seconds for e in report.events] == pytest.approx([1.0, 1.0, 1.0])


def test_timing_report_without_events(tiny_config):
    log = ExperimentRunner(update_config(tiny_config, {'brb.variant': 'off'}), 0).run()
    report = timing_report(log)
    assert report.brb_share == 0.0
    assert report.overhead == 0.0
    assert report.clustering_seconds > 0


def test_subsample_sweep(tiny_config):
    points = subsample_sweep(tiny_config, [30, 90])
    assert [p.subsample for p in points] == [30, 90]
    assert all(p.last_acc is not None for p in points)


@pytest.fixture
def cli_config(tmp_path):
    path = tmp_path / 'exp.cfg'
    path.write_text('dataset.kind=blobs\n'
                    'dataset.k=3\n'
                    'dataset.n_per_cluster=20\n'
                    'dataset.dim=4\n'
                    'hidden_dims=8\n'
                    'pretrain_epochs=1\n'
                    'clustering_epochs=3\n'
                    'batch_size=16\n'
                    'brb.interval=2\n'
                    'brb.recluster.subsample=60\n')
    return path


def test_cli_run_and_timing(cli_config, tmp_path):
    out = tmp_path / 'runs'
    assert main(['run', '--config', str(cli_config), '--out', str(out), '--seed', '0',
                 '--algorithm', 'IDEC', '--alpha', '0.7']) == 0
    path = out / 'IDEC-brb-s1-seed0.jsonl'
    log = read_log(path)
    assert log.header.config['brb']['alpha'] == 0.7
    assert len(log.events) == 1
    assert main(['timing', str(path)]) == 0


def test_cli_suite(cli_config, tmp_path):
    out = tmp_path / 'suite'
    assert main(['suite', '--config', str(cli_config), '--out', str(out), '--seed', '3',
                 '--set', 'label=mine']) == 0
    assert (out / 'summary.csv').is_file()
    assert (out / 'mine-seed3.jsonl').is_file()


def test_cli_export(cli_config, tmp_path):
    out = tmp_path / 'runs'
    assert main(['export', '--config', str(cli_config), '--out', str(out), '--seed', '1']) == 0
    table = np.loadtxt(out / 'DEC-brb-s1-seed1-embeddings.csv', delimiter=',')
    assert table.shape == (60, 3 + 2)
    assert set(table[:, 3].tolist()) == {0.0, 1.0, 2.0}
    assert (out / 'DEC-brb-s1-seed1.jsonl').is_file()
    target = tmp_path / 'emb.csv'
    assert main(['export', '--config', str(cli_config), '--out', str(out), '--csv', str(target)]) == 0
    assert target.is_file()


def test_cli_exit_codes(cli_config, tmp_path):
    assert main(['run', '--config', str(tmp_path / 'absent.cfg')]) == 4
    assert main(['run', '--config', str(cli_config), '--set', 'brb.alpha']) == 2
    assert main(['run', '--config', str(cli_config), '--set', 'brb.alpha=2']) == 2
    assert main(['timing', str(tmp_path / 'absent.jsonl')]) == 4
