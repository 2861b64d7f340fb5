"""Compressed-sensing MRI artifact-learning toolkit.

Simulates undersampled Cartesian k-space acquisition, trains a from-scratch
multi-scale convolutional network to predict aliasing artifacts in magnitude
and phase images, reconstructs artifact-free images by subtraction, and
quantifies data-manifold complexity with zero-dimensional persistent-homology
barcodes.
"""

from .kspace import (ArtifactPair, SamplingMask, compute_artifact, dft2,
                     idft2, make_mask, subsample, wrap_phase, zero_fill_recon)
from .augment import CATALOG, augment
from .phantom import make_phantom, ssos
from .homology import (Barcode, PointCloud, betti0_barcode, betti0_curve,
                       complexity_summary, image_cloud, pairwise_distances,
                       rescale)
from .unet import (Network, NetworkSpec, build_network, count_parameters,
                   effective_receptive_field, receptive_field, train_epoch)
from .pipeline import (DatasetSplit, Hyper, PhaseMask, ReconResult,
                       build_dataset, make_phase_mask, nmse, reconstruct,
                       simulate_pair, train_magnitude_network,
                       train_phase_network)

__version__ = "0.1.0"
