# -*- coding: utf-8 -*-
"""
End-to-end forward pass and the joint / staged training loops.

    S -> M_hat -> E -> (A, W) -> V, U -> R -> F -> H -> C -> logits

One differentiation graph spans the whole chain; the only cut is the
detached segmentation target inside the losses.
"""

import logging
import os
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from core.geometry import AffineTransform, inverse, resample, warp_mask
from core.nifti import write_volume
from core.records import (MetricTable, write_graph, write_prediction,
                          write_transform)
from core.tensor import Tensor, as_tensor, backward, no_grad, softmax
from errors import (DegenerateInputError, NonFiniteError, ShapeError,
                    SingularTransformError, TrainingDivergedError)
from fsm import StateMachine, TrainingState
from losses import (LossTargets, LossWeights, joint_coefficients, loss_terms,
                    mean_report, weighted_total)
from metrics import (accuracy, auc_roc, correlation, dice, jaccard,
                     mutual_information)
from nets import (GROUPS, ModelParams, classify, extract, graph_build,
                  overlay, register, roi_features, segment)
from optim import make_optimizer
from utils import derive_rng, harden, worker_count

logger = logging.getLogger(__name__)

# stage -> (trained parameter groups, loss coefficients)
STAGE_PLAN = OrderedDict([
    (1, (('theta',), {'ext': 1.})),
    (2, (('phi',), {'sim': 1.})),
    (3, (('psi',), {'seg': 1.})),
    (4, (('xi', 'eta'), {'cls': 1.})),
])
LAST_STAGE = next(reversed(STAGE_PLAN))
JOINT_STAGE = 0


@dataclass
class ForwardOutputs:
    m_hat: Tensor          # (W, H, D) soft extraction mask
    extracted: Tensor      # E
    transform: AffineTransform  # A
    per_stage: list
    warped: Tensor         # W
    seg_warped: Tensor     # V (C, W, H, D)
    parc_warped: Tensor    # U (K, W, H, D)
    seg_pred: Tensor       # R (C, W, H, D)
    parcellated: Tensor    # F (K, W, H, D)
    features: Tensor       # H (K, N), l2-normalized
    connectivity: Tensor   # C (K, K)
    logits: Tensor


@dataclass
class LogEntry:
    """
    One training epoch. loss_total is the objective that was minimized:
    the weighted joint loss, or in staged mode the stage's own term. The
    other terms are always reported unweighted.
    """

    stage: int
    epoch: int
    loss_total: float
    loss_cls: float
    loss_ext: float
    loss_sim: float
    loss_seg: float
    val_acc: float
    val_auc: float


def _finite(stage, tensor):
    if not np.all(np.isfinite(tensor.data)):
        raise NonFiniteError(stage)
    return tensor


def forward(params, volume, template, mask_override=None,
            transform_override=None):
    """
    Full forward pass for one subject volume (W, H, D). The overrides
    replace the predicted extraction mask and the predicted affine with
    given ones (ground-truth injection).
    """
    volume = as_tensor(volume)
    if volume.shape != template.shape:
        raise ShapeError('Subject dims {0} do not match template '
                         'dims {1}'.format(volume.shape, template.shape))
    if mask_override is None:
        m_hat = _finite('extract', extract(params.extractor, volume))
    else:
        m_hat = Tensor(np.asarray(mask_override, dtype=np.float64))
    extracted = overlay(volume, m_hat)

    target = Tensor(template.image)
    if transform_override is None:
        transform, warped, per_stage = register(params.registrar, extracted,
                                                target)
    else:
        transform, per_stage = transform_override, [transform_override]
        warped = resample(extracted.reshape((1,) + volume.shape),
                          transform).reshape(volume.shape)
    _finite('register', transform.matrix)
    _finite('register', warped)

    pull = inverse(transform)
    seg_warped = _finite('warp_seg', warp_mask(Tensor(template.seg), pull))
    parc_warped = _finite('warp_parc', warp_mask(Tensor(template.parc),
                                                 pull))
    seg_pred = _finite('segment', segment(params.segmenter, volume))

    parcellated = overlay(volume, parc_warped)
    features = _finite('roi_features', roi_features(params.roi_mlp,
                                                    parcellated))
    graph = graph_build(features)
    _finite('graph_build', graph.connectivity)
    logits = _finite('classify', classify(params.classifier, graph))

    return ForwardOutputs(m_hat, extracted, transform, per_stage, warped,
                          seg_warped, parc_warped, seg_pred, parcellated,
                          graph.features, graph.connectivity, logits)


def subject_targets(subject, template):
    return LossTargets(subject.mask.astype(np.float64), subject.label,
                       template.image)


def stage_epochs(total, stages=len(STAGE_PLAN)):
    """Even split of the epoch budget; the remainder goes to the last."""
    base = total // stages
    return [base] * (stages - 1) + [total - base * (stages - 1)]


def oracle_overrides(subject, oracle):
    """forward() keyword arguments injecting the subject's ground truth."""
    if not oracle:
        return {}
    return {'mask_override': subject.mask,
            'transform_override': subject.transform}


def predict_probs(params, subjects, template, oracle=False):
    """Class probabilities (n, classes) for a list of subjects."""
    with no_grad():
        return np.array([softmax(forward(
            params, subject.image, template,
            **oracle_overrides(subject, oracle)).logits, axis=0).data
            for subject in subjects])


def classification_scores(probs, labels):
    """(ACC, AUC) of probabilities; AUC is nan for a single-class split."""
    labels = np.asarray(labels)
    acc = accuracy(probs, labels)
    try:
        auc = auc_roc(probs[:, 1], labels)
    except DegenerateInputError:
        logger.warning('AUC undefined: only one class among %d subjects',
                       labels.size)
        auc = float('nan')
    return acc, auc


class Trainer(object):

    """
    Shared epoch loop of both training modes: deterministic minibatch
    order, per-batch gradient accumulation, validation after each epoch,
    best-validation-ACC snapshot and divergence rollback. With 'oracle'
    every subject runs with its ground-truth mask and transform injected.
    """

    def __init__(self, config, dataset, params=None, oracle=False):
        self.config = config
        self.oracle = oracle
        self.dataset = dataset
        self.template = dataset.template
        self.train = dataset.train
        self.val = dataset.val
        if not self.train:
            raise DegenerateInputError('Empty training split')
        self.params = params or ModelParams.build(config)
        self.log = []
        self.epoch = 0
        self.best_acc = None
        self.best = None
        self.stable = self.params.snapshot()

    def subject_loss(self, subject, coefficients):
        outputs = forward(self.params, subject.image, self.template,
                          **oracle_overrides(subject, self.oracle))
        terms = loss_terms(outputs, subject_targets(subject, self.template),
                           self.config.similarity, self.config.lncc_window)
        return weighted_total(terms, coefficients)

    def train_batch(self, batch, coefficients, optimizer):
        optimizer.zero_grad()
        reports = []
        for subject in batch:
            total, report = self.subject_loss(subject, coefficients)
            if not np.isfinite(report.total):
                raise NonFiniteError('loss')
            backward(total * (1. / len(batch)))
            reports.append(report)

        for param in optimizer.params:
            if param.grad is not None and not np.all(np.isfinite(
                    param.grad)):
                raise NonFiniteError('backward')
        optimizer.step()
        return reports

    def validate(self):
        if not self.val:
            return float('nan'), float('nan')
        probs = predict_probs(self.params, self.val, self.template,
                              self.oracle)
        return classification_scores(probs, [s.label for s in self.val])

    def run_epoch(self, stage, coefficients, optimizer, select_best):
        order = derive_rng(self.config.seed, self.epoch).permutation(
            len(self.train))
        size = self.config.batch_size
        reports = []
        try:
            for start in range(0, len(order), size):
                batch = [self.train[index] for index in
                         order[start:start + size]]
                reports.extend(self.train_batch(batch, coefficients,
                                                optimizer))
            val_acc, val_auc = self.validate()
        except (NonFiniteError, DegenerateInputError,
                SingularTransformError) as exc:
            self.params.restore(self.stable)
            logger.error('Training diverged at stage %d epoch %d: %s',
                         stage, self.epoch + 1, exc)
            raise TrainingDivergedError(
                'Diverged at epoch {0} ({1})'.format(self.epoch + 1, exc),
                params=self.params, log=self.log)

        report = mean_report(reports)
        self.epoch += 1
        entry = LogEntry(stage, self.epoch, report.total, report.cls,
                         report.ext, report.sim, report.seg, val_acc,
                         val_auc)
        self.log.append(entry)
        self.stable = self.params.snapshot()
        logger.info('stage %d epoch %d: loss %.5f (cls %.4f ext %.4f sim '
                    '%.4f seg %.4f) val acc %.3f auc %.3f', stage,
                    self.epoch, report.total, report.cls, report.ext,
                    report.sim, report.seg, val_acc, val_auc)

        # ties (and an undefined ACC) go to the later epoch
        if select_best and (self.best_acc is None or
                            not val_acc < self.best_acc):
            self.best_acc = val_acc
            self.best = self.stable
            logger.info('New best validation ACC %.3f at epoch %d', val_acc,
                        self.epoch)
        return entry

    def restore_best(self):
        if self.best is not None:
            self.params.restore(self.best)


def _fit(trainer, groups, coefficients):
    trainer.params.set_trainable(groups)
    optimizer = make_optimizer(trainer.config,
                               trainer.params.parameters(groups))
    try:
        for _ in range(trainer.config.epochs):
            trainer.run_epoch(JOINT_STAGE, coefficients, optimizer,
                              select_best=True)
        trainer.restore_best()
    finally:
        trainer.params.set_trainable(GROUPS)
    return trainer.params, trainer.log


def train_joint(config, dataset, params=None):
    """Minimize the joint objective over every parameter group."""
    return _fit(Trainer(config, dataset, params), GROUPS,
                joint_coefficients(config.weights))


def train_graph_classifier(config, dataset, params=None):
    """
    Ablation with alpha = beta = gamma = 0: ground-truth masks and
    transforms are injected and only the ROI features and the classifier
    (xi, eta) train; everything upstream stays frozen.
    """
    return _fit(Trainer(config, dataset, params, oracle=True),
                ('xi', 'eta'), joint_coefficients(LossWeights(0., 0., 0.)))


class TrainingStage(TrainingState):
    def __init__(self, trainer, stage, epochs):
        TrainingState.__init__(self, trainer, stage)
        self.groups, self.coefficients = STAGE_PLAN[stage]
        self.epochs = epochs

    def enter(self):
        logger.info('Stage %d: training %s for %d epochs', self.key,
                    ', '.join(self.groups), self.epochs)
        self.trainer.params.set_trainable(self.groups)

    def leave(self):
        self.trainer.params.set_trainable(GROUPS)

    def run(self):
        trainer = self.trainer
        optimizer = make_optimizer(trainer.config,
                                   trainer.params.parameters(self.groups))
        last = self.key == LAST_STAGE
        entries = [trainer.run_epoch(self.key, self.coefficients, optimizer,
                                     select_best=last)
                   for _ in range(self.epochs)]
        if last:
            trainer.restore_best()
        return entries


class StagedTraining(StateMachine):

    """
    Sequential baseline: extraction, registration, segmentation, then
    ROI features + classifier, each on its own loss with everything
    upstream frozen. A stage runs only after all earlier stages.
    """

    def __init__(self, trainer, completed=()):
        StateMachine.__init__(self, STAGE_PLAN, completed)
        self.trainer = trainer
        self.epochs = dict(zip(STAGE_PLAN, stage_epochs(
            trainer.config.epochs)))

    def run_stage(self, stage, on_stage_end=None):
        self.check_order(stage)
        self.run_state(TrainingStage(self.trainer, stage,
                                     self.epochs[stage]))
        if on_stage_end is not None:
            on_stage_end(stage, self.trainer.params)

    def run(self, on_stage_end=None):
        for stage in self.pending:
            self.run_stage(stage, on_stage_end)
        return self.trainer.params, self.trainer.log


def train_staged(config, dataset, params=None, on_stage_end=None):
    """
    Staged baseline with the same total epoch budget as train_joint.
    'on_stage_end(stage, params)' is called after every stage.
    """
    return StagedTraining(Trainer(config, dataset, params)).run(on_stage_end)


def train(config, dataset, params=None, on_stage_end=None):
    if config.mode == 'staged':
        return train_staged(config, dataset, params, on_stage_end)
    return train_joint(config, dataset, params)


def _safe(metric, *args):
    try:
        return metric(*args)
    except DegenerateInputError as exc:
        logger.warning('%s undefined: %s', metric.__name__, exc)
        return float('nan')


def subject_metrics(params, subject, template, oracle=False):
    """Per-subject metric values and class probabilities."""
    with no_grad():
        outputs = forward(
            params, subject.image, template,
            mask_override=subject.mask if oracle else None,
            transform_override=subject.transform if oracle else None)

    classes = template.seg.shape[0]
    rois = template.parc.shape[0]
    mask = outputs.m_hat.data >= 0.5
    seg = harden(outputs.seg_pred.data)
    parc = harden(outputs.parc_warped.data, offset=1)
    warped = outputs.warped.data

    values = {
        'ext_dice': dice(mask, subject.mask),
        'ext_jaccard': jaccard(mask, subject.mask),
        'reg_mi': mutual_information(warped, template.image),
        'reg_cc': _safe(correlation, warped, template.image),
        'seg_dice': dice(seg, subject.seg, labels=classes),
        'seg_jaccard': jaccard(seg, subject.seg, labels=classes),
        'parc_dice': dice(parc, subject.parc, labels=rois + 1),
        'parc_jaccard': jaccard(parc, subject.parc, labels=rois + 1),
    }
    probs = softmax(outputs.logits, axis=0).data
    return values, probs


def evaluate(params, subjects, template, oracle=False):
    """
    MetricTable over a split. With 'oracle' the ground-truth extraction
    mask and transform of each subject are injected.
    """
    if not subjects:
        raise DegenerateInputError('Cannot evaluate an empty split')

    def run(subject):
        return subject_metrics(params, subject, template, oracle)

    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        results = list(pool.map(run, subjects))

    table = MetricTable()
    for subject, (values, _) in zip(subjects, results):
        table.add(subject.index, values)
    probs = np.array([probs for _, probs in results])
    acc, auc = classification_scores(probs, [s.label for s in subjects])
    table.set_split('acc', acc)
    table.set_split('auc', auc)
    return table


@dataclass
class InferenceResult:
    mask: np.ndarray          # hardened extraction mask (uint8)
    warped: np.ndarray
    transform: AffineTransform
    seg: np.ndarray           # tissue labels
    parc: np.ndarray          # ROI labels 1..K
    connectivity: np.ndarray
    logits: np.ndarray

    @property
    def prediction(self):
        return int(np.argmax(self.logits))

    def save(self, directory):
        os.makedirs(directory, exist_ok=True)
        write_volume(os.path.join(directory, 'm_hat.nii'), self.mask)
        write_volume(os.path.join(directory, 'warped.nii'), self.warped)
        write_transform(os.path.join(directory, 'A.txt'), self.transform)
        write_volume(os.path.join(directory, 'seg.nii'), self.seg)
        write_volume(os.path.join(directory, 'parc.nii'), self.parc)
        write_graph(os.path.join(directory, 'graph.csv'), self.connectivity)
        write_prediction(os.path.join(directory, 'pred.csv'), self.logits)


def infer(params, volume, template):
    """Hardened outputs of the full chain for one volume."""
    with no_grad():
        outputs = forward(params, volume, template)
    return InferenceResult(
        (outputs.m_hat.data >= 0.5).astype(np.uint8),
        outputs.warped.data.copy(),
        outputs.transform.detach(),
        harden(outputs.seg_pred.data),
        harden(outputs.parc_warped.data, offset=1),
        outputs.connectivity.data.copy(),
        outputs.logits.data.copy())
