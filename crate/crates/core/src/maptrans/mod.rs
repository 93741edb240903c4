//! Unpaired map-to-map translation: corpus collection from clean and
//! corrupted deployments, and cycle-consistent adversarial training of the
//! ego and global style networks.

mod cyclegan;
mod dataset;

pub use cyclegan::{
    paired_probe_mse, train_style, CycleTrainConfig, CycleTrainStats, TranslationNet,
};
pub use dataset::{
    channel_slice, collect_clean_maps, collect_noisy_maps, resize_bilinear, CollectConfig,
    MapDataset, MapItem, MapRole, MapScope, Provenance, GLOBAL_SIZE,
};

#[cfg(test)]
mod tests;
