"""Player-embedding models and run-rate class prediction for T20 innings.

The pipeline: cluster innings run rates into four classes (k-means, elbow
diagnostic, majority-class split), learn batting/bowling player embeddings
with either a cross-entropy or a contrastive siamese objective, transfer the
frozen embeddings into a predictor over lineups + match features (+ optional
pitch-report vectors), and classify held-out innings by logits or by
nearest-neighbor similarity against the train-set representations.
"""

__version__ = "0.1.0"

from .clustering import (ClusterModel, ElbowCurve, LabelScheme, assign_class,
                         assign_classes, elbow_curve, hierarchical_refine,
                         kmeans_1d, select_elbow)
from .data import (Dataset, InningsRecord, PitchEmbeddingSet, SyntheticSpec,
                   SyntheticTruth, generate_synthetic, hash_vectorize,
                   load_dataset, load_pitch_embeddings, match_features,
                   pitch_embeddings_from_truth, sample_test_split,
                   save_dataset, save_pitch_embeddings)
from .evaluation import (EvalReport, ExperimentConfig, ExperimentSetting,
                         RepresentationIndex, bootstrap_ci, build_index,
                         classify_by_logits, classify_by_similarity,
                         confusion_and_accuracy, run_experiment,
                         run_setting_once)
from .models import (EmbeddingTable, PlayerEmbeddingModel, PlayerModelConfig,
                     PredictorConfig, PredictorModel, embed_team,
                     init_player_model, init_predictor, load_model,
                     predictor_from_player_model)
from .training import (ContrastiveConfig, TrainConfig, TrainReport,
                       contrastive_loss, contrastive_loss_grad, kfold_split,
                       sample_pairs, train_contrastive, train_cross_entropy,
                       train_predictor)

__all__ = [name for name in dir() if not name.startswith("_")]
