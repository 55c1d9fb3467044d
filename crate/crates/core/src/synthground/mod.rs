//! Synthetic referring-expression scenes: coloured shapes on a black canvas
//! with five-slot expressions. Half the samples (by default) are
//! relation-critical: the target has a pixel-identical twin on the far side of
//! the referent, so only the stated relation tells them apart.

mod generate;
mod io;
mod scene;
mod vocab;

pub use generate::{
    gen_dataset, gen_sample, hflip_augment, is_critical_index, render, sample_rng, GroundingSample, MAX_OBJECT,
    MIN_OBJECT,
};
pub use io::{load_dataset, save_dataset, IMAGES, MANIFEST};
pub use scene::{BBox, Color, Expression, Relation, SceneObject, Shape, IMAGE_SIZE, RELATION_MARGIN};
pub use vocab::{encode_expression, parse_slots, slot_words, Vocab, NULL_TOKEN, SLOTS};
