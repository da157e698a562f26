//! The fixed synthetic token set shared by every model and task.
//!
//! | ids      | meaning                               |
//! |----------|---------------------------------------|
//! | 0..=9    | numbers `0`..`9`                       |
//! | 10       | `+`                                    |
//! | 11       | answer delimiter (`####`)              |
//! | 12       | stop                                   |
//! | 13       | filler (semantically inert padding)    |
//! | 14..=19  | task markers                           |
//! | 20..=31  | content words `w0`..`w11`              |

use alloc::format;
use alloc::string::String;

pub const VOCAB_SIZE: usize = 32;
pub const NUM_DIGITS: usize = 10;
pub const PLUS: usize = 10;
pub const DELIM: usize = 11;
pub const STOP: usize = 12;
pub const FILLER: usize = 13;
pub const TASK_ARITH: usize = 14;
pub const TASK_LEN: usize = 15;
pub const TASK_INCLUDE: usize = 16;
pub const TASK_EXCLUDE: usize = 17;
pub const TASK_COUNT: usize = 18;
pub const TASK_FREE: usize = 19;
pub const FIRST_WORD: usize = 20;
pub const NUM_WORDS: usize = 12;

pub fn digit(n: usize) -> usize {
    debug_assert!(n < NUM_DIGITS);
    n
}

pub fn word(i: usize) -> usize {
    debug_assert!(i < NUM_WORDS);
    FIRST_WORD + i
}

pub fn is_digit(tok: usize) -> bool {
    tok < NUM_DIGITS
}

pub fn is_word(tok: usize) -> bool {
    (FIRST_WORD..FIRST_WORD + NUM_WORDS).contains(&tok)
}

/// Tokens up to (excluding) the first stop token.
pub fn content(tokens: &[usize]) -> &[usize] {
    match tokens.iter().position(|&t| t == STOP) {
        Some(p) => &tokens[..p],
        None => tokens,
    }
}

pub fn render(tok: usize) -> String {
    match tok {
        t if is_digit(t) => format!("{t}"),
        PLUS => "+".into(),
        DELIM => "####".into(),
        STOP => "<stop>".into(),
        FILLER => "<pad>".into(),
        TASK_ARITH => "<arith>".into(),
        TASK_LEN => "<len>".into(),
        TASK_INCLUDE => "<include>".into(),
        TASK_EXCLUDE => "<exclude>".into(),
        TASK_COUNT => "<count>".into(),
        TASK_FREE => "<free>".into(),
        t if is_word(t) => format!("w{}", t - FIRST_WORD),
        t => format!("<{t}>"),
    }
}
