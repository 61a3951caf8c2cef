# -*- coding: utf-8 -*-

# Numerics
PROB_CLAMP = 1e-12
NORM_EPS = 1e-12
DET_EPS = 1e-6
SNAP_TOL = 1e-10

# Gradient checks
FD_STEP = 1e-5
FD_REL_TOL = 1e-4
FD_ABS_TOL = 1e-3
FD_SMALL_GRAD = 1e-6
PIPELINE_REL_TOL = 1e-3

# Masks
HARDEN_THRESHOLD = 0.5
MI_BINS = 32

# Phantom
MIN_DIMS = 16
MIN_SUBJECTS = 10
MAX_REDRAWS = 10
BRAIN_SEMI_AXES = (0.35, 0.32, 0.30)
SKULL_INNER = 1.12
SKULL_OUTER = 1.28
SKULL_INTENSITY = 1.3
MAX_ROTATION_DEG = 15.
SCALE_RANGE = (0.9, 1.1)
MAX_TRANSLATION_LIMIT = 5.
MAX_SHEAR = 0.1

# Splits
VAL_FRACTION = 0.1
MIN_SPLIT = 2

# Files
TEMPLATE_FILE = 'template.nii'
TEMPLATE_SEG_FILE = 'template_seg.nii'
TEMPLATE_PARC_FILE = 'template_parc.nii'
LABELS_FILE = 'labels.csv'
MANIFEST_FILE = 'manifest.cfg'
TRUTH_DIR = 'truth'
CSV_DIGITS = 12

# Environment
THREADS_ENV = 'NEUROGRAPH_THREADS'

# Exit codes
EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DIVERGED = 3
EXIT_GRADCHECK = 4
