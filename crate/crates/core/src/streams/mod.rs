//! Stream files, synthetic stream generation and the stability simulator.

pub mod format;
pub mod stability;
pub mod synth;

pub use format::{
    open_stream, read_results, read_stream, write_results, write_stream, DetectionRecord,
    FrameRecord, ResultsWriter, StreamHeader, StreamReader,
};
pub use stability::{stability_sim, StabilityConfig, StabilityRun};
pub use synth::{synth_stream, SynthConfig, SynthStream};
