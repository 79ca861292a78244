//! Waveform to log-mel feature frontend.

mod io;
mod mel;

pub use io::{read_waveform, write_waveform, ClipEntry, Manifest, MANIFEST_SCHEMA_VERSION};
pub use mel::{
    compute_mel, hz_to_mel, mel_to_hz, normalize, MelConfig, MelFrontend, MelSpectrogram, NormStats, Waveform,
};
