//! Article-level news stance detection guided by journalistic structure.
//!
//! Articles are split into headline, lead, conclusion and direct quotations
//! ([`segmenter`]); a segment-level agent labels each part ([`agents`]); the
//! labels are embedded as XML-like tags in the article prompt ([`prompter`])
//! sent to a chat LLM ([`inference`]). [`analysis`] and [`retrieval`] cover
//! evaluation, agreement statistics, MMR re-ranking and bias reporting.

pub mod agents;
pub mod analysis;
pub mod cache;
pub mod corpus;
pub mod inference;
pub mod mock;
pub mod parallel;
pub mod prompter;
pub mod remote;
pub mod retrieval;
pub mod segmenter;

pub use corpus::{Article, ArticleAnnotation, Corpus, CorpusRecord, Genre, StanceLabel};
pub use segmenter::{SegmentKind, SegmentSpan};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/corpus.md")]
    mod corpus {}
    #[doc = include_str!("../../../book/src/segments.md")]
    mod segments {}
    #[doc = include_str!("../../../book/src/tagging.md")]
    mod tagging {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/agreement.md")]
    mod agreement {}
    #[doc = include_str!("../../../book/src/recommendation.md")]
    mod recommendation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
