"""sparsemlp: truly sparse MLP training on CSR weight matrices.

Weights live in compressed sparse row form for the whole run; training is
built from four kernels (sparse-times-dense, its transpose, a sampled
dense-dense product on the weight pattern, and a raw-value axpy), so no
binary masks and no dense-sized work at low density. A masked-dense
reference backend and a benchmark CLI reproduce the accuracy-parity,
runtime, scalability, and memory comparisons.
"""

from ._version import __version__
from .errors import (
    ConfigurationError,
    DatasetIOError,
    FormatError,
    InvalidArgumentError,
    StateError,
)
from .tensor_core import (
    CsrMatrix,
    SparsityPattern,
    csr_from_dense,
    csr_to_dense,
    dense_matmul,
    get_num_threads,
    max_num_threads,
    row_sums,
    sddmm,
    set_num_threads,
    sparse_combine,
    spmm,
    spmm_transposed,
    warmup_kernels,
)
from .sparsity import (
    DensityReport,
    Rng,
    SparsityPlan,
    density_report,
    er_densities,
    layer_pairs_from_chain,
    sample_pattern,
    xavier_init,
    xavier_limit,
)
from .nn import (
    BatchNormLayer,
    DenseLinearLayer,
    DropoutLayer,
    GradientDescent,
    Momentum,
    NoActivation,
    ReLU,
    SoftmaxCrossEntropyLoss,
    SparseLinearLayer,
    softmax_ce_gradient,
    softmax_ce_loss,
    softmax_columns,
)
from .train import (
    BatchNormalization,
    ConstantSchedule,
    Dense,
    Dropout,
    EpochRecord,
    MaskedDense,
    MultiStepSchedule,
    Sequential,
    Sparse,
    TrainConfig,
    evaluate,
    lr_at,
    sgd_train,
)
from .data_io import (
    CIFAR10_MEAN,
    CIFAR10_STD,
    Dataset,
    augment_images,
    load_cifar10,
    load_model,
    load_npy,
    make_augmenter,
    model_size_report,
    normalize_pixels,
    save_model,
    save_npy,
    synthetic_blobs,
    unnormalize_pixels,
)
from .bench import (
    ExperimentConfig,
    RunReport,
    bench_epoch_seconds,
    bench_inference,
    build_model,
    default_learning_rate,
    load_dataset,
    run_training,
    sweep_depth,
    sweep_width,
    weights_fingerprint,
)
