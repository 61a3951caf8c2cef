# -*- coding: utf-8 -*-
"""
The five learnable functions: extraction U-Net, registration encoder,
segmentation U-Net, ROI feature MLP and GCN classifier.
"""

import logging
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from core.geometry import AffineTransform, compose, resample
from core.tensor import (Tensor, concat, conv3d, l2_normalize, matmul,
                         pool3d, softmax, upsample3d)
from errors import ShapeError

logger = logging.getLogger(__name__)

# Parameter groups of the joint objective
GROUPS = ('theta', 'phi', 'psi', 'xi', 'eta')


@dataclass(frozen=True)
class UNet3DConfig:
    in_channels: int = 1
    base_channels: int = 8
    depth: int = 2
    out_channels: int = 1

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError('U-Net depth must be >= 1')


@dataclass(frozen=True)
class RegEncoderConfig:
    channels: tuple = (8, 16, 16)
    stages: int = 2

    def __post_init__(self):
        if self.stages < 1:
            raise ValueError('At least one registration stage is needed')


@dataclass(frozen=True)
class GCNConfig:
    in_features: int = 16
    widths: tuple = (16, 16)
    num_classes: int = 2


@dataclass
class BrainGraph:
    features: Tensor       # (K, N), rows l2-normalized
    connectivity: Tensor   # (K, K)


class Network(object):

    """
    Named parameter container for one learnable function.
    """

    def __init__(self, name, rng):
        self.name = name
        self.rng = rng
        self.params = OrderedDict()

    def add_param(self, key, shape, fan_in=None):
        """He-normal parameter (zeros when fan_in is None)."""
        if fan_in is None:
            data = np.zeros(shape)
        else:
            data = self.rng.normal(0., np.sqrt(2. / fan_in), shape)
        tensor = Tensor(data, requires_grad=True)
        self.params[key] = tensor
        return tensor

    def named_parameters(self):
        for key, tensor in self.params.items():
            yield '{0}.{1}'.format(self.name, key), tensor

    def parameters(self):
        return list(self.params.values())


class ConvLayer(object):
    def __init__(self, net, key, in_channels, out_channels, size=3):
        self.size = size
        self.weight = net.add_param(key + '.weight', (out_channels,
                                    in_channels, size, size, size),
                                    fan_in=in_channels * size ** 3)
        self.bias = net.add_param(key + '.bias', (out_channels,))

    def zero(self):
        self.weight.data[...] = 0.
        self.bias.data[...] = 0.

    def __call__(self, x, relu=True):
        out = conv3d(x, self.weight, padding=self.size // 2)
        bias = self.bias.reshape(-1, 1, 1, 1).broadcast_to(out.shape)
        out = out + bias
        return out.relu() if relu else out


class Linear(object):
    def __init__(self, net, key, in_features, out_features, bias=True,
                 zero=False):
        self.weight = net.add_param(key + '.weight',
                                    (in_features, out_features),
                                    fan_in=None if zero else in_features)
        self.bias = None
        if bias:
            self.bias = net.add_param(key + '.bias', (out_features,))

    def __call__(self, x):
        out = matmul(x, self.weight)
        if self.bias is not None:
            out = out + self.bias.reshape(1, -1).broadcast_to(out.shape)
        return out


class UNet3D(Network):

    """
    3D U-Net: two 3x3x3 convolutions per level, max-pool down, nearest
    upsampling and skip concatenation up, 1x1x1 head.
    """

    def __init__(self, name, config, rng):
        Network.__init__(self, name, rng)
        self.config = config
        widths = [config.base_channels * 2 ** level
                  for level in range(config.depth + 1)]

        self.down = []
        channels = config.in_channels
        for level in range(config.depth):
            key = 'down{0}'.format(level)
            self.down.append((
                ConvLayer(self, key + '.conv0', channels, widths[level]),
                ConvLayer(self, key + '.conv1', widths[level],
                          widths[level])))
            channels = widths[level]

        self.bottom = (
            ConvLayer(self, 'bottom.conv0', channels, widths[-1]),
            ConvLayer(self, 'bottom.conv1', widths[-1], widths[-1]))
        channels = widths[-1]

        self.up = []
        for level in reversed(range(config.depth)):
            key = 'up{0}'.format(level)
            self.up.append((
                ConvLayer(self, key + '.conv0', channels + widths[level],
                          widths[level]),
                ConvLayer(self, key + '.conv1', widths[level],
                          widths[level])))
            channels = widths[level]

        self.head = ConvLayer(self, 'head', channels, config.out_channels,
                              size=1)

    def zero_head(self):
        """Zero the final layer so the raw output is identically 0."""
        self.head.zero()

    def __call__(self, x):
        factor = 2 ** self.config.depth
        if any(dim % factor for dim in x.shape[1:]):
            raise ShapeError('U-Net input dims {0} not divisible by {1}'
                             .format(x.shape[1:], factor))
        skips = []
        for first, second in self.down:
            x = second(first(x))
            skips.append(x)
            x = pool3d(x)

        x = self.bottom[1](self.bottom[0](x))

        for (first, second), skip in zip(self.up, reversed(skips)):
            x = concat([upsample3d(x), skip], axis=0)
            x = second(first(x))

        return self.head(x, relu=False)


class RegEncoder(Network):

    """
    3D CNN encoder mapping a (moving, template) pair to 12 affine
    parameters. The head starts at zero, i.e. at the identity transform.
    """

    def __init__(self, name, config, dims, rng):
        Network.__init__(self, name, rng)
        self.config = config
        factor = 2 ** len(config.channels)
        if dims % factor:
            raise ShapeError('Registration dims {0} not divisible by {1}'
                             .format(dims, factor))
        self.convs = []
        channels = 2
        for level, width in enumerate(config.channels):
            self.convs.append(ConvLayer(self, 'conv{0}'.format(level),
                                        channels, width))
            channels = width
        flat = channels * (dims // factor) ** 3
        self.head = Linear(self, 'head', flat, 12, zero=True)

    def __call__(self, pair):
        x = pair
        for conv in self.convs:
            x = pool3d(conv(x))
        return self.head(x.reshape(1, -1)).reshape(12)


class RoiMlp(Network):

    """
    Weight-sharing MLP applied to every ROI channel of the parcellated
    image: flattened voxels -> hidden -> N features.
    """

    def __init__(self, name, voxels, hidden, features, rng):
        Network.__init__(self, name, rng)
        self.hidden = Linear(self, 'hidden', voxels, hidden)
        self.out = Linear(self, 'out', hidden, features)

    def __call__(self, parcellated):
        rois = parcellated.reshape(parcellated.shape[0], -1)
        return self.out(self.hidden(rois).relu())


class GCN(Network):

    """
    Graph convolutional classifier: ReLU(C_hat H W) layers, mean pooling
    over nodes and a linear head producing class logits.
    """

    def __init__(self, name, config, rng):
        Network.__init__(self, name, rng)
        self.config = config
        self.layers = []
        width = config.in_features
        for index, out in enumerate(config.widths):
            self.layers.append(Linear(self, 'layer{0}'.format(index), width,
                                      out, bias=False))
            width = out
        self.head = Linear(self, 'head', width, config.num_classes)

    def __call__(self, graph):
        adjacency = normalized_adjacency(graph.connectivity)
        hidden = graph.features
        for layer in self.layers:
            hidden = gcn_propagate(adjacency, hidden, layer.weight)
        pooled = hidden.mean(axes=0).reshape(1, -1)
        return self.head(pooled).reshape(self.config.num_classes)


def normalized_adjacency(connectivity):
    """
    D^-1/2 (C + I) D^-1/2 with degrees taken from |C + I| row sums, so
    negative edge weights keep the normalization real.
    """
    nodes = connectivity.shape[0]
    adjacency = connectivity + Tensor(np.eye(nodes))
    inv_sqrt = adjacency.abs().sum(axes=1) ** -0.5
    scale = matmul(inv_sqrt.reshape(nodes, 1), inv_sqrt.reshape(1, nodes))
    return adjacency * scale


def gcn_propagate(adjacency, features, weight, activation=True):
    out = matmul(matmul(adjacency, features), weight)
    return out.relu() if activation else out


class ModelParams(object):

    """
    All learnable parameters, grouped per function:
    theta (extraction), phi (registration), psi (segmentation),
    xi (ROI features), eta (classification).
    """

    def __init__(self, extractor, registrar, segmenter, roi_mlp, classifier):
        self.extractor = extractor
        self.registrar = registrar
        self.segmenter = segmenter
        self.roi_mlp = roi_mlp
        self.classifier = classifier
        self.groups = OrderedDict(zip(GROUPS, (extractor, registrar,
                                               segmenter, roi_mlp,
                                               classifier)))

    @classmethod
    def build(cls, config):
        """Fresh parameters for a TrainConfig, seeded by config.seed."""
        rng = np.random.default_rng(config.seed)
        dims = config.dims
        extractor = UNet3D('extract', UNet3DConfig(
            1, config.unet_base, config.unet_depth, 1), rng)
        registrar = RegEncoder('register', RegEncoderConfig(
            config.reg_channels, config.stages), dims, rng)
        segmenter = UNet3D('segment', UNet3DConfig(
            1, config.unet_base, config.unet_depth, config.classes), rng)
        roi_mlp = RoiMlp('roi', dims ** 3, config.roi_hidden,
                         config.features, rng)
        classifier = GCN('classify', GCNConfig(
            config.features, config.gcn_widths, config.num_classes), rng)
        return cls(extractor, registrar, segmenter, roi_mlp, classifier)

    def named_tensors(self):
        named = OrderedDict()
        for net in self.groups.values():
            for name, tensor in net.named_parameters():
                named[name] = tensor
        return named

    def group_of(self, name):
        prefix = name.split('.', 1)[0]
        for group, net in self.groups.items():
            if net.name == prefix:
                return group
        raise KeyError(name)

    def parameters(self, groups=GROUPS):
        return [tensor for group in groups
                for tensor in self.groups[group].parameters()]

    def set_trainable(self, groups):
        """Only parameters of 'groups' record gradients."""
        for group, net in self.groups.items():
            for tensor in net.parameters():
                tensor.requires_grad = group in groups

    def zero_grad(self):
        for tensor in self.parameters():
            tensor.zero_grad()

    def snapshot(self):
        return OrderedDict((name, tensor.data.copy())
                           for name, tensor in self.named_tensors().items())

    def restore(self, snapshot):
        for name, tensor in self.named_tensors().items():
            tensor.data[...] = snapshot[name]


def extract(f_e, volume):
    """Soft extraction mask in (0, 1), same spatial shape as 'volume'."""
    logits = f_e(volume.reshape((1,) + volume.shape))
    return logits.sigmoid().reshape(volume.shape)


def overlay(volume, mask):
    """
    Element-wise product. A (K, W, H, D) mask multiplies each channel
    with the same (W, H, D) volume.
    """
    if mask.shape == volume.shape:
        return volume * mask
    if mask.ndim == volume.ndim + 1 and mask.shape[1:] == volume.shape:
        expanded = volume.reshape((1,) + volume.shape).broadcast_to(
            mask.shape)
        return expanded * mask
    raise ShapeError('overlay: volume {0} vs mask {1}'.format(volume.shape,
                                                              mask.shape))


def register(f_r, extracted, template):
    """
    Multi-stage affine registration. Stage i predicts A_i from the image
    warped so far and the template; the total transform composes the
    stages in order and the returned image is a single resampling of the
    input by it.
    """
    dims = extracted.shape
    shape = (1,) + dims
    target = template.reshape(shape)
    moving = extracted.reshape(shape)

    per_stage = []
    current = moving
    for stage in range(f_r.config.stages):
        if per_stage:
            current = resample(current, per_stage[-1])
        params = f_r(concat([current, target], axis=0))
        per_stage.append(AffineTransform.from_params(params))

    total = compose(*per_stage)
    warped = resample(moving, total).reshape(dims)
    return total, warped, per_stage


def segment(f_s, volume):
    """Per-voxel class distribution (C, W, H, D)."""
    logits = f_s(volume.reshape((1,) + volume.shape))
    return softmax(logits, axis=0)


def roi_features(f_o, parcellated):
    return f_o(parcellated)


def graph_build(features):
    """
    Row-normalize the ROI features and connect every pair by their inner
    product. The product is symmetrized so C == C^T holds exactly.
    """
    normalized = l2_normalize(features, axis=1)
    product = matmul(normalized, normalized.T)
    connectivity = (product + product.T) * 0.5
    return BrainGraph(normalized, connectivity)


def classify(f_g, graph):
    return f_g(graph)
