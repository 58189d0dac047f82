//! Prompt rendering and reply parsing for every agent and evaluator.

mod parse;
mod render;
pub mod templates;

pub use parse::{
    parse_critic, parse_direct, parse_hypotheses, parse_pairwise, parse_refiner, parse_relation,
    parse_reviewer, CriticAssessment, PairwiseVerdict, ParseError, Parsed, RefinementAction,
    RefinementDirective, RefinerOutput, Relation, Winner, MAX_HYPOTHESES, MAX_REASONING_STEPS,
};
pub use render::{
    format_article_blocks, render_prompt, ContextError, PromptContext, PromptKind, RenderedPrompt,
};
