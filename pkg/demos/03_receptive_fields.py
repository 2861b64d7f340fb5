#!/usr/bin/env python3
"""Compare how the receptive field grows through a plain conv chain
versus the pooled multi-scale network.

The single-scale chain grows linearly (two pixels per 3x3 conv); pooling
doubles the jump at every scale so the multi-scale field grows
exponentially and covers the whole input.
"""

from artifact.unet import (NetworkSpec, effective_receptive_field,
                           receptive_field)

single = NetworkSpec(base_channels=64, input_size=(256, 256),
                     mode="single_scale")
multi = NetworkSpec(5, 4, 64, (256, 256))

print("single-scale (18 convs, no pooling):")
for row in receptive_field(single):
    print(f"  {row.name:18s} k={row.kernel} s={row.stride:<3} rf={row.rf_h}")
print(f"  effective: {effective_receptive_field(single)}\n")

print("multi-scale (5 scales, 4 convs per stage):")
for row in receptive_field(multi):
    marker = " <- covers the 256x256 input" if row.rf_h >= 256 else ""
    print(f"  {row.name:18s} k={row.kernel} s={row.stride:<3} "
          f"rf={row.rf_h}{marker}")
    if row.rf_h >= 256:
        break
print(f"  effective: {effective_receptive_field(multi)}")
