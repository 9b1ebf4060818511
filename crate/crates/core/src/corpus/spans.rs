use super::Sentence;

/// All `(start, end)` candidates of a sentence with at most `max_len` tokens,
/// 1-based inclusive, in lexicographic order.
pub fn enumerate_spans(sentence: &Sentence, max_len: usize) -> Vec<(usize, usize)> {
    span_candidates(sentence.len(), max_len)
}

pub fn span_candidates(n: usize, max_len: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(span_count(n, max_len));
    for start in 1..=n {
        let last = (start + max_len.max(1) - 1).min(n);
        out.extend((start..=last).map(|end| (start, end)));
    }
    out
}

/// Number of candidates `span_candidates(n, max_len)` yields.
pub fn span_count(n: usize, max_len: usize) -> usize {
    let k = max_len.max(1).min(n);
    // sum_{len=1..k} (n - len + 1)
    k * (n + 1) - k * (k + 1) / 2
}
