"""Domain adaptation for style-based image generators.

A source generator is adapted to a new visual domain by optimizing a
single channel-wise modulation vector (or a hypernetwork predicting one
per domain) against directional losses in a joint image/text embedding
space. The source weights are never modified.
"""

from .errors import CheckpointError, ConfigError, InputError, ShapeError
from .modulated_conv import ModConvConfig, demodulate, domain_modulate, mod_conv_forward, modulate
from .generator import (
    FULL_SCALE_CHANNELS,
    TOY_CHANNELS,
    Generator,
    GeneratorConfig,
    GeneratorParams,
    LayerLayout,
    count_parameters,
    full_scale_config,
    init_generator_params,
    parameter_counts,
    style_mix,
    toy_config,
)
from .embedding_space import (
    DomainDescriptor,
    Encoder,
    Ensemble,
    LossWeights,
    MockEncoder,
    available_encoders,
    create_encoder,
    direction_loss,
    clip_across_loss,
    diversity_metric,
    domain_norm_loss,
    guarded_cosine,
    image_direction,
    indomain_angle_loss,
    members_of,
    mock_ensemble,
    mock_eval_encoder,
    quality_metric,
    register_encoder,
    text_direction,
    tt_direction_loss,
)
from .domain_sampler import (
    DomainSampler,
    PromptVocabulary,
    SamplerConfig,
    default_domain_pairs,
    default_vocabulary,
    generate_combinations,
    load_domain_pairs,
    load_vocabulary,
    mix_embeddings,
    resample_on_sphere,
    resample_with_direction,
    sample_convex_hull,
    sample_dirichlet_weights,
)
from .hyperdomainnet import (
    HDNConfig,
    count_hdn_parameters,
    hdn_forward,
    hdn_param_shapes,
    hdn_parameter_count,
    init_hdn_params,
)
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .trainer import (
    AdamState,
    AdaptResult,
    TrainingConfig,
    adam_init,
    adam_step,
    adapt_one_shot,
    adapt_single_domain_text,
    domain_vector_checkpoint,
    domain_vector_from_checkpoint,
    hdn_checkpoint,
    hdn_params_from_checkpoint,
    moving_average,
    naive_invert,
    synthesis_checkpoint,
    synthesis_params_from_checkpoint,
    train_hdn,
    training_config,
    write_history_csv,
)

__version__ = "0.1.0"
