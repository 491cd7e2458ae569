"""Few-shot contrastive adaptation and cross-lingual evaluation over
precomputed audio-text embeddings.

Subpackage map:

* veccore: vector primitives and the portable SplitMix64 RNG
* kernels: hot numeric kernels (JIT-accelerated with a pure-numpy fallback)
* losses: symmetric InfoNCE and supervised contrastive objectives
* adapters: projection head, AdamW, contrastive training, store adaptation
* datastore: binary embedding store, support sampling, synthetic data
* classify: zero-shot prompts, RBF-kernel SVM (SMO), small MLP
* experiments: split plans, metrics, single cells, sweeps
* reporting: result tables and cross-setting comparisons
* cli: command-line entry point
"""

__version__ = "0.1.0"
