use crate::error::{invalid, Result};
use crate::vocab::{self, DELIM};

use super::tasks::{Constraint, GoldAnswer, SyntheticTask};

/// Tokens after the last answer delimiter, up to the stop token.
/// `None` when the response carries no delimiter.
pub fn answer_span(response: &[usize]) -> Option<&[usize]> {
    let content = vocab::content(response);
    let at = content.iter().rposition(|&t| t == DELIM)?;
    Some(&content[at + 1..])
}

pub fn check_constraint(c: Constraint, response: &[usize]) -> bool {
    let content = vocab::content(response);
    match c {
        Constraint::ExactLength(k) => content.len() == k,
        Constraint::Include(w) => content.contains(&w),
        Constraint::Exclude(w) => !content.is_empty() && !content.contains(&w),
    }
}

/// Checks a response against the task's ground truth. A missing delimiter
/// is a failed check, not an error. Freeform tasks have no verifier.
pub fn verify(task: &SyntheticTask, response: &[usize]) -> Result<bool> {
    match &task.gold {
        GoldAnswer::Tokens(gold) => Ok(answer_span(response).is_some_and(|span| span == gold.as_slice())),
        GoldAnswer::Constraint(c) => Ok(check_constraint(*c, response)),
        GoldAnswer::Unverifiable => Err(invalid("no verifier registered for freeform tasks")),
    }
}
