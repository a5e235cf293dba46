"""
    This file is part of cigar.


    Tests for the command line and the end-to-end pipeline on a tiny log.

"""

import json

import numpy as np
from pytest import fixture

from cigar import cli
from cigar.classes.cache import FunctionCache
from cigar.pipeline import Pipeline, RunConfig
from cigar.setup import settings
from cigar.tools.dataset import InteractionDataset


@fixture
def log_file(tmp_path):
    # 12 users, 12 items, every user and item with 8 interactions
    lines = ['user,item'] + [f'{user},{(user + step) % 12}' for user in range(12) for step in range(8)]
    path = tmp_path / 'log.csv'
    path.write_text('\n'.join(lines) + '\n')
    return path

@fixture
def quick():
    return ['--set', 'num_epochs=2', '--set', 'iters_per_epoch=2', '--set', 'batch_size=32', '--set', 'embedding_dim=8']

@fixture
def run(tmp_path, log_file, quick):
    output = tmp_path / 'run'
    assert cli.main(['pipeline', '--input', str(log_file), '--output', str(output), '--bits', '16', '--substrings', '2', '-c', '5', '-n', '3', '5', *quick]) == cli.EXIT_OK
    return output


def teardown_function():
    settings.reset()
    FunctionCache.clear_all()


def test_ingest(tmp_path, log_file):
    assert cli.main(['ingest', '--input', str(log_file), '--output', str(tmp_path / 'a.cgds')]) == cli.EXIT_OK
    assert cli.main(['ingest', '--input', str(log_file), '--output', str(tmp_path / 'b.cgds')]) == cli.EXIT_OK

    assert (tmp_path / 'a.cgds').read_bytes() == (tmp_path / 'b.cgds').read_bytes()
    assert (tmp_path / 'settings.cfg').exists()

    dataset = InteractionDataset.load(tmp_path / 'a.cgds')
    assert dataset.num_users == 12
    assert dataset.num_train == 12 * 6


def test_ingest_seed_changes_split(tmp_path, log_file):
    cli.main(['ingest', '--input', str(log_file), '--output', str(tmp_path / 'a.cgds'), '--seed', '1'])
    cli.main(['ingest', '--input', str(log_file), '--output', str(tmp_path / 'b.cgds'), '--seed', '2'])

    assert (tmp_path / 'a.cgds').read_bytes() != (tmp_path / 'b.cgds').read_bytes()


def test_missing_input(tmp_path):
    assert cli.main(['ingest', '--input', str(tmp_path / 'nope.csv'), '--output', str(tmp_path / 'a.cgds')]) == cli.EXIT_INPUT


def test_bad_setting(tmp_path, log_file):
    assert cli.main(['ingest', '--input', str(log_file), '--output', str(tmp_path / 'a.cgds'), '--set', 'no_such_key=1']) == cli.EXIT_INPUT
    assert cli.main(['ingest', '--input', str(log_file), '--output', str(tmp_path / 'a.cgds'), '--set', 'kcore']) == cli.EXIT_INPUT


def test_config_file(tmp_path, log_file):
    config = tmp_path / 'run.cfg'
    config.write_text('# stricter core\nkcore = 9\n')

    # Every user and item has 8 interactions, so a 9-core is empty
    assert cli.main(['ingest', '--input', str(log_file), '--output', str(tmp_path / 'a.cgds'), '--config', str(config)]) == cli.EXIT_INPUT


def test_pipeline_outputs(run):
    for name in ('dataset.cgds', 'hashrec.cghr', 'index.cgix', 'candidates.cgcd', 'ranker.cgrk', 'hashrec_curve.csv', 'settings.cfg', 'report.json', 'report.txt'):
        assert (run / name).exists(), name

    report = json.loads((run / 'report.json').read_text())

    assert set(report) == {'candidates', 'hashrec', 'cigar'}
    assert report['cigar']['n'] == 3
    assert report['cigar']['hr_at_n'] <= report['candidates']['hr_at_n']
    assert report['cigar']['extra']['c'] == 5
    assert 'code_bits=16' in (run / 'settings.cfg').read_text()


def test_recommend(run, capsys):
    capsys.readouterr()
    assert cli.main(['recommend', '--dataset', str(run / 'dataset.cgds'), '--ranker-model', str(run / 'ranker.cgrk'), '--user', '0', '-n', '3', '--json']) == cli.EXIT_OK

    recommendation = json.loads(capsys.readouterr().out)
    dataset = InteractionDataset.load(run / 'dataset.cgds')
    seen = dataset.item_remap[dataset.train_items(int(np.flatnonzero(dataset.user_remap == 0)[0]))].tolist()

    assert len(recommendation['items']) == 3
    assert not set(recommendation['items']) & set(seen)
    assert recommendation['scores'] == sorted(recommendation['scores'], reverse=True)


def test_recommend_with_candidates(run, capsys):
    capsys.readouterr()
    args = ['recommend', '--dataset', str(run / 'dataset.cgds'), '--ranker-model', str(run / 'ranker.cgrk'), '--user', '4', '-n', '2', '--model', str(run / 'hashrec.cghr'), '--index', str(run / 'index.cgix'), '-c', '4']

    assert cli.main(args + ['--json']) == cli.EXIT_OK
    assert len(json.loads(capsys.readouterr().out)['items']) == 2


def test_recommend_unknown_user(run):
    assert cli.main(['recommend', '--dataset', str(run / 'dataset.cgds'), '--ranker-model', str(run / 'ranker.cgrk'), '--user', '999']) == cli.EXIT_INPUT


def test_evaluate_hashrec(run, tmp_path):
    output = tmp_path / 'hashrec.json'
    assert cli.main(['evaluate', '--dataset', str(run / 'dataset.cgds'), '--model', str(run / 'hashrec.cghr'), '-n', '5', '--output', str(output)]) == cli.EXIT_OK

    report = json.loads(output.read_text())
    assert report['model'] == 'HashRec'
    assert report['num_users_evaluated'] == 12


def test_evaluate_needs_model(run):
    assert cli.main(['evaluate', '--dataset', str(run / 'dataset.cgds')]) == cli.EXIT_INPUT


def test_stages_resume(run):
    # A later stage alone picks up the earlier artifacts from the run directory
    pipeline = Pipeline(RunConfig(dataset=str(run / 'dataset.cgds'), output=str(run), c=5, top_n=[5]))
    reports = pipeline.evaluate()

    assert reports['candidates'].n == 5
    assert pipeline.hashrec.user_codes.r == 16


def test_sweep(tmp_path, log_file, quick):
    output = tmp_path / 'sweep'
    assert cli.main(['sweep', '--input', str(log_file), '--output', str(output), '--bits', '16', '--substrings', '2', '--cs', '3', '6', '--hs', '0', '1', '-n', '2', *quick]) == cli.EXIT_OK

    frame = (output / 'sweep.csv').read_text().splitlines()
    assert frame[0] == 'h,c,hr@2,mrr@2'
    assert len(frame) == 5
