"""tagsong: joint tag/song embedding space for tag-based music retrieval.

The package factorizes implicit play counts into cultural song vectors,
embeds tags (via pretrained word vectors) and songs (via cultural and/or
acoustic inputs) into one 256-d space with two small MLP branches trained
on a triplet hinge over cosine distance, and answers tag queries by
nearest-neighbor search in that space.
"""

from .backend import active_backend, set_backend
from .core import cosine_distance, l2_normalize, make_rng, split_rng
from .dataset import (
    AnnotationRecord,
    RetrievalDataset,
    SplitAssignment,
    artist_level_split,
    attach_categories,
    attach_tag_vectors,
    bind_inputs,
    load_annotations,
    load_categories,
    load_features,
    load_plays,
    topk_tag_filter,
)
from .errors import (
    BindingError,
    DomainError,
    NumericalError,
    OOVError,
    ParseError,
    SamplingError,
    ShapeError,
    SplitError,
    TagsongError,
)
from .net import (
    AdamState,
    GradientSet,
    MlpBranch,
    adam_step,
    backward,
    backward_batch,
    forward,
    forward_batch,
    load_checkpoint,
    new_adam_state,
    new_branch,
    save_checkpoint,
    zero_gradients,
)
from .retrieval import (
    EvalReport,
    SongIndex,
    average_precision,
    build_song_index,
    evaluate,
    export_report,
    precision_at_k,
    retrieve,
)
from .synth import SynthData, build_synth_dataset, generate, write_files
from .trainer import TrainConfig, TrainReport, init_branches, train
from .triplet import (
    SamplerConfig,
    SamplerView,
    Triplet,
    TripletBatch,
    dw_weights,
    sample_balanced,
    sample_balanced_weighted,
    sample_random,
    triplet_loss,
    triplet_loss_grad,
    triplet_loss_grad_batch,
)
from .wmf import (
    FactorModel,
    SparseInteractions,
    als_factorize,
    als_solve_row,
    half_sweep,
    interactions_from_plays,
    load_factors,
    save_factors,
    wmf_objective,
)
from .wordvec import (
    WordVectorTable,
    load_word_vectors,
    nearest_words,
    normalize_tag,
    save_word_vectors,
    tag_to_vector,
)

__version__ = "0.1.0"
