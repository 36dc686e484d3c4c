# SPDX-License-Identifier: Apache-2.0
"""LTR-assisted query-focused summarization.

Thin wrapper over the compiled extension: overlapping query-framed
segmentation, span-probability relevance labeling, joint training of a
shared-decoder toy encoder-decoder on generation plus a listwise
learning-to-rank loss, and nDCG/ROUGE evaluation.
"""

try:
    # installed wheel: extension lives inside the package
    from ._ltrsum import *  # noqa: F401,F403
except ImportError:
    # in-tree: extension on PYTHONPATH from the CMake build dir
    from _ltrsum import *  # noqa: F401,F403
