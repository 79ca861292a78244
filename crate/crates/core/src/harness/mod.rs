//! Synthetic data, domain shifts, evaluation protocols and reports.

mod eval;
mod report;
mod store;
mod synth;

pub use eval::{
    ablation_matrix, build_model, cross_domain_matrix, evaluate_frozen, evaluate_tta, evaluate_zero_shot,
    init_prompt_state, prepare, prepare_views, score_run, seeded_shift_runs, test_dataset, AblationCell,
    AblationVariant, CrossDomainMatrix, ExperimentConfig, Metrics, PreparedSet, RunReport, ToySetup,
};
pub use report::{
    read_runs_csv, summarize, write_cross_domain_csv, write_detail_jsonl, write_runs_csv, write_summary_csv, RunRow,
    SummaryRow, REPORT_SCHEMA_VERSION,
};
pub use store::{read_dataset, write_dataset, StoredDataset, MANIFEST_FILE};
pub use synth::{
    apply_shift, class_prompts, class_signatures, domain_words, gen_dataset, shift_waveform, ClassSignature, Dataset,
    DomainShiftSpec, Split, SyntheticDatasetSpec, DOMAIN_WORDS, PROMPT_PREFIX,
};
