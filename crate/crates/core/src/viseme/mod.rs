//! Viseme dictionary, motion-sample database and transition costs.

mod db;
mod dict;
mod transition;

pub use db::{Annotation, Candidates, MotionSample, SampleDb, SampleSource, Take};
pub use dict::{extend_word, ExtendedLabel, VisemeDict, EMPTY, VISEMES};
pub use transition::{
    alignment_cost, effective_window, transition_cost, Transition, TransitionTable, DEFAULT_SEARCH, DEFAULT_WINDOW,
};

/// Context margin added around annotated segments so that consecutive
/// samples of a take overlap enough for a zero-cost junction.
pub fn default_margin(window: usize, search: usize) -> usize {
    (window + search) / 2
}
