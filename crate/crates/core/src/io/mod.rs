//! WAV audio and the BVF feature-file interchange format.

mod feature_file;
mod wav;

pub use feature_file::{decode_features, encode_features, read_features, write_features, FEATURE_FILE_VERSION};
pub use wav::{read_wav, write_wav, SAMPLE_RATE};
