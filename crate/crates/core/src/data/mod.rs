pub mod archive;
pub mod field;
pub mod ops;
pub mod split;
pub mod synth;
pub mod transform;

pub use archive::{read_archive, write_archive, DatasetManifest, Split};
pub use field::{Dims, FieldSequence, SequencePair};
pub use synth::{synth_sequence, SyntheticParams};
pub use transform::TransformSpec;
