//! Separation quality metrics and the evaluation protocol.

mod estoi;
mod eval;
mod report;
mod resample;
mod sdr;

pub use estoi::{
    estoi, remove_silent_frames, third_octave_bands, ESTOI_DYN_RANGE_DB, ESTOI_FFT_SIZE,
    ESTOI_FRAME_LEN, ESTOI_MIN_FREQ, ESTOI_NUM_BANDS, ESTOI_SAMPLE_RATE, ESTOI_SEGMENT,
};
pub use eval::{
    evaluate_outputs, evaluate_utterance, least_energy_output, match_scores, score_matrix,
    Condition, EvalResult, Metric, MetricOutcome, OutputMatch,
};
pub use report::{
    aggregate, render_csv, render_text, ReportTable, FULL_SCALE_FOOTNOTE, NO_PROCESSING_COLUMN,
    ORACLE_MODEL_ID, REPORT_SNRS_DB,
};
pub use resample::{design_filter, resample, KAISER_BETA};
pub use sdr::{sdr, sdr_with_taps, SdrReference, SDR_CAP_DB, SDR_FILTER_TAPS};
