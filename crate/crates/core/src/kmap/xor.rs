// SPDX-License-Identifier: Apache-2.0
use super::{TruthFunction, Value};
use serde::{Deserialize, Serialize};

/// `f = XOR of vars` when `invert` is false, its complement (XNOR) otherwise.
/// `vars` are indices into the function's variable list, ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct XorForm {
    pub vars: Vec<usize>,
    pub invert: bool,
}

impl XorForm {
    pub fn eval(&self, tf: &TruthFunction, m: usize) -> bool {
        self.vars.iter().fold(self.invert, |acc, &v| acc ^ tf.bit(m, v))
    }
}

/// Finds a parity function over at least two variables that agrees with
/// every specified row. Smaller subsets are tried first, then subsets in
/// variable order, then non-inverted before inverted.
pub fn detect_xor(tf: &TruthFunction) -> Option<XorForm> {
    let n = tf.num_vars();
    let mut subsets: Vec<Vec<usize>> = (0u32..1 << n)
        .filter(|s| s.count_ones() >= 2)
        .map(|s| (0..n).filter(|&v| s & (1 << v) != 0).collect())
        .collect();
    subsets.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    let specified: Vec<(usize, bool)> = tf
        .values()
        .iter()
        .enumerate()
        .filter_map(|(m, v)| match v {
            Value::Zero => Some((m, false)),
            Value::One => Some((m, true)),
            Value::DontCare => None,
        })
        .collect();
    if specified.is_empty() {
        return None;
    }
    for vars in subsets {
        for invert in [false, true] {
            let form = XorForm { vars: vars.clone(), invert };
            if specified.iter().all(|&(m, want)| form.eval(tf, m) == want) {
                return Some(form);
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_input_xor() {
        let tf = TruthFunction::from_minterms(2, &[1, 2], &[]).unwrap();
        assert_eq!(detect_xor(&tf), Some(XorForm { vars: vec![0, 1], invert: false }));
    }

    #[test]
    fn three_input_parity() {
        let tf = TruthFunction::from_minterms(3, &[1, 2, 4, 7], &[]).unwrap();
        assert_eq!(detect_xor(&tf), Some(XorForm { vars: vec![0, 1, 2], invert: false }));
    }

    #[test]
    fn xnor_of_two() {
        let tf = TruthFunction::from_minterms(2, &[0, 3], &[]).unwrap();
        assert_eq!(detect_xor(&tf), Some(XorForm { vars: vec![0, 1], invert: true }));
    }

    #[test]
    fn constants_and_and_are_not_parity() {
        let one = TruthFunction::from_minterms(2, &[0, 1, 2, 3], &[]).unwrap();
        assert_eq!(detect_xor(&one), None);
        let and = TruthFunction::from_minterms(2, &[3], &[]).unwrap();
        assert_eq!(detect_xor(&and), None);
    }

    #[test]
    fn parity_of_a_subset() {
        // f = b ^ c, independent of a
        let tf = TruthFunction::from_minterms(3, &[1, 2, 5, 6], &[]).unwrap();
        assert_eq!(detect_xor(&tf), Some(XorForm { vars: vec![1, 2], invert: false }));
    }
}
