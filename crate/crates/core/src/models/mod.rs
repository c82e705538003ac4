//! Classifier presets and the autoencoder `Q_phi`.

mod autoencoder;
mod classifier;

pub use autoencoder::{
    squared_distance, train_autoencoder, train_class_autoencoders, Autoencoder, AutoencoderConfig, AutoencoderTriple,
    DEFAULT_CATEGORY_WIDTH, DEFAULT_EMBEDDING_DIM, DEFAULT_HIDDEN,
};
pub use classifier::{balanced_weights, build_classifier_net, ClassWeight, Classifier, Preset, CLASSIFIER_DROPOUT};
