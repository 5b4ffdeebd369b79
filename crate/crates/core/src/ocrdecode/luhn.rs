use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LuhnError {
    #[error("empty digit string")]
    Empty,
    #[error("non-digit character {ch:?} at position {pos}")]
    NonDigit { pos: usize, ch: char },
}

fn digits(s: &str) -> Result<Vec<u32>, LuhnError> {
    if s.is_empty() {
        return Err(LuhnError::Empty);
    }
    s.chars()
        .enumerate()
        .map(|(pos, ch)| ch.to_digit(10).filter(|_| ch.is_ascii_digit()).ok_or(LuhnError::NonDigit { pos, ch }))
        .collect()
}

fn weighted_sum(ds: impl DoubleEndedIterator<Item = u32>, double_first: bool) -> u32 {
    ds.rev()
        .enumerate()
        .map(|(i, d)| {
            if (i % 2 == 0) == double_first {
                let x = d * 2;
                if x > 9 {
                    x - 9
                } else {
                    x
                }
            } else {
                d
            }
        })
        .sum()
}

/// Standard mod-10 check: from the rightmost digit, every second digit is
/// doubled (minus nine when above nine) and the total must divide by ten.
pub fn luhn_valid(s: &str) -> Result<bool, LuhnError> {
    let ds = digits(s)?;
    Ok(weighted_sum(ds.into_iter(), false) % 10 == 0)
}

/// The unique digit that makes `prefix` followed by it Luhn-valid.
pub fn luhn_check_digit(prefix: &str) -> Result<u8, LuhnError> {
    let ds = digits(prefix)?;
    // the check digit will sit in the undoubled position, shifting the rest
    let sum = weighted_sum(ds.into_iter(), true);
    Ok(((10 - sum % 10) % 10) as u8)
}
