//! Prompt rendering for the zero, single-attribute and multi-attribute
//! strategies, k-attribute partitioning, few-shot exemplar selection and
//! the inverse codec from reply text back to attribute sets.

mod codec;
mod fewshot;
mod partition;
mod render;

pub use codec::{parse_output, serialize_answer, ParsedOutput, AFFIRMATIVE_MARKERS, NONE_MARKERS};
pub use fewshot::{build_fewshot, Exemplar, FewShotPrompt};
pub use partition::{make_k_groups, make_partition, PartitionPlan, MAX_GROUPS};
pub use render::{
    render_multi, render_single, render_zero, AnswerShape, PromptKind, PromptRequest, ANSWER_CUE,
};
