# -*- coding: utf-8 -*-
import os

import numpy as np
import pytest

import neurograph
import pipeline
from constants import EXIT_DIVERGED, EXIT_GRADCHECK, EXIT_OK, EXIT_USAGE
from core.checkpoint import load_checkpoint
from core.nifti import write_volume
from core.records import SUMMARY, read_log, read_rows
from errors import SingularTransformError
from gradcheck import CheckResult, check_config
from neurograph import main
from nets import ModelParams

GEN = ['phantom-gen', '--dims', '16', '--classes', '3', '--rois', '4',
       '--subjects', '10']


@pytest.fixture(scope='module')
def cli_data(tmp_path_factory):
    out = tmp_path_factory.mktemp('cli')
    assert main(GEN + ['--out', str(out / 'data')]) == EXIT_OK
    check_config().replace(epochs=1).save(str(out / 'small.cfg'))
    return out


@pytest.fixture(scope='module')
def checkpoint(cli_data):
    path = str(cli_data / 'model.ckpt')
    assert main(['train', '--data', str(cli_data / 'data'), '--config',
                 str(cli_data / 'small.cfg'), '--out', path, '--log',
                 str(cli_data / 'log.csv')]) == EXIT_OK
    return path


def test_phantom_gen_is_reproducible(cli_data, tmp_path):
    assert main(GEN + ['--out', str(tmp_path)]) == EXIT_OK
    for name in ('manifest.cfg', 'labels.csv', 's0.nii', 'truth/a3.txt'):
        with open(str(cli_data / 'data' / name), 'rb') as first, \
                open(str(tmp_path / name), 'rb') as second:
            assert first.read() == second.read(), name


def test_usage_errors(tmp_path):
    assert main(['phantom-gen', '--out', str(tmp_path), '--subjects',
                 '5']) == EXIT_USAGE
    assert main(['gradcheck', '--trials', '0']) == EXIT_USAGE
    assert main(['train', '--data', str(tmp_path / 'nothing'), '--out',
                 str(tmp_path / 'm.ckpt')]) == EXIT_USAGE
    with pytest.raises(SystemExit) as info:
        main(['phantom-gen', '--colour', 'blue'])
    assert info.value.code == 2
    with pytest.raises(SystemExit):
        main([])


def test_gradcheck_single_module(capsys):
    assert main(['gradcheck', '--module', 'resample']) == EXIT_OK
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines and all(line.startswith('resample') for line in lines)
    assert all(line.endswith('ok') for line in lines)


def test_gradcheck_failure_exit(monkeypatch):
    monkeypatch.setattr(neurograph, 'run_checks', lambda *args: [
        CheckResult('matmul', 'matmul', 1., False)])
    assert main(['gradcheck']) == EXIT_GRADCHECK


def test_train_joint(checkpoint, cli_data):
    assert os.path.isfile(checkpoint)
    log = read_log(str(cli_data / 'log.csv'))
    assert [row['stage'] for row in log] == [0.]


def test_train_staged(cli_data):
    out = str(cli_data / 'staged.ckpt')
    assert main(['train', '--data', str(cli_data / 'data'), '--config',
                 str(cli_data / 'small.cfg'), '--mode', 'staged',
                 '--epochs', '4', '--out', out]) == EXIT_OK
    for stage in range(1, 5):
        assert os.path.isfile('{0}.stage{1}'.format(out, stage))
    with open(out, 'rb') as final, \
            open(out + '.stage4', 'rb') as last_stage:
        assert final.read() == last_stage.read()


def test_train_divergence_writes_stable_checkpoint(monkeypatch, cli_data,
                                                   tmp_path):
    def failing(*args, **kwargs):
        raise SingularTransformError(0.)

    monkeypatch.setattr(pipeline, 'forward', failing)
    out = str(tmp_path / 'diverged.ckpt')
    log = str(tmp_path / 'log.csv')
    assert main(['train', '--data', str(cli_data / 'data'), '--config',
                 str(cli_data / 'small.cfg'), '--out', out, '--log',
                 log]) == EXIT_DIVERGED
    params, config = load_checkpoint(out)
    initial = ModelParams.build(config).snapshot()
    for name, values in params.snapshot().items():
        assert np.array_equal(values, initial[name])
    assert read_log(log) == []


def test_eval(checkpoint, cli_data):
    out = str(cli_data / 'metrics.csv')
    assert main(['eval', '--ckpt', checkpoint, '--data',
                 str(cli_data / 'data'), '--out', out]) == EXIT_OK
    rows = read_rows(out, ('subject', 'metric', 'value', 'std'))
    summary = [row for row in rows if row[0] == SUMMARY]
    assert len(summary) == 10
    assert len(rows) == 10 + 2 * 8


def test_infer(checkpoint, cli_data, tmp_path):
    data = cli_data / 'data'
    assert main(['infer', '--ckpt', checkpoint, '--subject',
                 str(data / 's0.nii'), '--template', str(data), '--out',
                 str(tmp_path)]) == EXIT_OK
    assert sorted(os.listdir(str(tmp_path))) == sorted([
        'm_hat.nii', 'warped.nii', 'A.txt', 'seg.nii', 'parc.nii',
        'graph.csv', 'pred.csv'])
    prediction = read_rows(str(tmp_path / 'pred.csv'),
                           ('logit_0', 'logit_1', 'pred'))
    assert len(prediction) == 1
    logits = np.array(prediction[0][:2], dtype=float)
    assert int(prediction[0][2]) == int(np.argmax(logits))


def test_infer_rejects_wrong_dims(checkpoint, cli_data, tmp_path):
    subject = str(tmp_path / 'small.nii')
    write_volume(subject, np.zeros((8, 8, 8)))
    assert main(['infer', '--ckpt', checkpoint, '--subject', subject,
                 '--template', str(cli_data / 'data'), '--out',
                 str(tmp_path / 'out')]) == EXIT_USAGE
