# -*- coding: utf-8 -*-

# Desk-scale training defaults; optimizer settings and loss weights are
# not fixed by the method and are exposed here.
TRAIN_DEFAULTS = {
    'alpha': 1.0,
    'beta': 1.0,
    'gamma': 1.0,
    'optimizer': 'adam',
    'lr': 1e-3,
    'momentum': 0.9,
    'beta1': 0.9,
    'beta2': 0.999,
    'epochs': 200,
    'batch_size': 4,
    'seed': 0,
    'stages': 2,
    'dims': 24,
    'classes': 4,
    'rois': 8,
    'features': 16,
    'num_classes': 2,
    'unet_depth': 2,
    'unet_base': 8,
    'reg_channels': (8, 16, 16),
    'roi_hidden': 32,
    'gcn_widths': (16, 16),
    'similarity': 'ncc',
    'lncc_window': 5,
    'mode': 'joint',
}

PHANTOM_DEFAULTS = {
    'dims': 24,
    'classes': 4,
    'rois': 8,
    'subjects': 40,
    'delta': 0.4,
    'sigma': 0.05,
    'max_rotation': 15.0,
    'scale_min': 0.9,
    'scale_max': 1.1,
    'max_translation': 2.0,
    'max_shear': 0.1,
    'seed': 0,
}
