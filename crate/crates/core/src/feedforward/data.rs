//! Labeled pattern sets, target conventions, and classification error.

use super::NetError;

/// How targets encode class membership, and therefore how an output is
/// turned into a verdict when counting classification errors.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TargetConvention {
    /// Targets in {0, 1}; outputs decided by the step threshold at 1/2
    /// (an output of exactly 1/2 counts as class 0).
    ZeroOne,
    /// Targets in {-1, +1}; outputs decided by sign, with sgn(0) = +1.
    PlusMinusOne,
    /// One-hot target rows; the output verdict is one-hot at the largest
    /// component (lowest index on ties).
    OneHot,
}

impl TargetConvention {
    pub fn tag(self) -> &'static str {
        match self {
            TargetConvention::ZeroOne => "zero_one",
            TargetConvention::PlusMinusOne => "plus_minus_one",
            TargetConvention::OneHot => "one_hot",
        }
    }

    pub fn from_tag(tag: &str) -> Option<TargetConvention> {
        match tag {
            "zero_one" => Some(TargetConvention::ZeroOne),
            "plus_minus_one" => Some(TargetConvention::PlusMinusOne),
            "one_hot" => Some(TargetConvention::OneHot),
            _ => None,
        }
    }
}

/// Input patterns with their targets and the target convention.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSet {
    inputs: Vec<Vec<f64>>,
    targets: Vec<Vec<f64>>,
    convention: TargetConvention,
}

impl LabeledSet {
    /// Build a set, checking that rows are uniform and targets obey the
    /// convention's encoding.
    pub fn new(
        inputs: Vec<Vec<f64>>,
        targets: Vec<Vec<f64>>,
        convention: TargetConvention,
    ) -> Result<LabeledSet, NetError> {
        if inputs.len() != targets.len() {
            return Err(NetError::CountMismatch {
                context: "targets",
                expected: inputs.len(),
                got: targets.len(),
            });
        }
        if let Some(first) = inputs.first() {
            let n = first.len();
            if inputs.iter().any(|x| x.len() != n) {
                return Err(NetError::BadDataFile("ragged input rows".into()));
            }
        }
        if let Some(first) = targets.first() {
            let m = first.len();
            if targets.iter().any(|t| t.len() != m) {
                return Err(NetError::BadDataFile("ragged target rows".into()));
            }
        }
        for (row, t) in targets.iter().enumerate() {
            validate_target(t, convention).map_err(|detail| {
                NetError::BadTargets(format!("pattern {row}: {detail}"))
            })?;
        }
        Ok(LabeledSet {
            inputs,
            targets,
            convention,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.first().map_or(0, Vec::len)
    }

    pub fn target_dim(&self) -> usize {
        self.targets.first().map_or(0, Vec::len)
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn targets(&self) -> &[Vec<f64>] {
        &self.targets
    }

    pub fn convention(&self) -> TargetConvention {
        self.convention
    }

    /// Parse the plain-text exchange format: a header line
    /// `p N M convention`, then p lines of N input components followed by
    /// M target components, whitespace-separated. Blank lines are ignored.
    pub fn parse(text: &str) -> Result<LabeledSet, NetError> {
        let bad = |msg: String| NetError::BadDataFile(msg);
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| bad("missing header".into()))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(bad(format!(
                "header needs `p N M convention`, got {} fields",
                fields.len()
            )));
        }
        let parse_count = |s: &str, what: &str| {
            s.parse::<usize>()
                .map_err(|_| bad(format!("bad {what} count {s:?}")))
        };
        let p = parse_count(fields[0], "pattern")?;
        let n = parse_count(fields[1], "input")?;
        let m = parse_count(fields[2], "target")?;
        let convention = TargetConvention::from_tag(fields[3])
            .ok_or_else(|| bad(format!("unknown target convention {:?}", fields[3])))?;

        let mut inputs = Vec::with_capacity(p);
        let mut targets = Vec::with_capacity(p);
        for row in 0..p {
            let line = lines
                .next()
                .ok_or_else(|| bad(format!("expected {p} pattern lines, found {row}")))?;
            let values: Result<Vec<f64>, NetError> = line
                .split_whitespace()
                .map(|v| {
                    v.parse::<f64>()
                        .map_err(|_| bad(format!("pattern {row}: bad number {v:?}")))
                })
                .collect();
            let values = values?;
            if values.len() != n + m {
                return Err(bad(format!(
                    "pattern {row}: expected {} values, got {}",
                    n + m,
                    values.len()
                )));
            }
            inputs.push(values[..n].to_vec());
            targets.push(values[n..].to_vec());
        }
        if lines.next().is_some() {
            return Err(bad(format!("more than {p} pattern lines")));
        }
        LabeledSet::new(inputs, targets, convention)
    }

    /// Render in the format accepted by [`LabeledSet::parse`].
    pub fn render(&self) -> String {
        let mut out = format!(
            "{} {} {} {}\n",
            self.len(),
            self.input_dim(),
            self.target_dim(),
            self.convention.tag()
        );
        for (x, t) in self.inputs.iter().zip(&self.targets) {
            let row: Vec<String> = x.iter().chain(t).map(|v| format!("{v}")).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }
}

fn validate_target(t: &[f64], convention: TargetConvention) -> Result<(), String> {
    match convention {
        TargetConvention::ZeroOne => {
            if t.iter().any(|&v| v != 0.0 && v != 1.0) {
                return Err("zero_one targets must be 0 or 1".into());
            }
        }
        TargetConvention::PlusMinusOne => {
            if t.iter().any(|&v| v != -1.0 && v != 1.0) {
                return Err("plus_minus_one targets must be -1 or +1".into());
            }
        }
        TargetConvention::OneHot => {
            if t.iter().any(|&v| v != 0.0 && v != 1.0) {
                return Err("one_hot targets must be 0 or 1".into());
            }
            let ones = t.iter().filter(|&&v| v == 1.0).count();
            if ones != 1 {
                return Err(format!("one_hot target rows need exactly one 1, got {ones}"));
            }
        }
    }
    Ok(())
}

/// Fraction of wrong verdicts under the given convention.
///
/// For 0/1 and plus/minus targets the error averages |t - verdict| (halved
/// for the plus/minus case) over every pattern and output unit; for one-hot
/// targets it averages the per-pattern mismatch indicator, i.e. the sum of
/// |t - y| over units divided by 2p. All three lie in [0, 1], and an empty
/// batch has error 0.
pub fn classification_error(
    outputs: &[Vec<f64>],
    targets: &[Vec<f64>],
    convention: TargetConvention,
) -> f64 {
    assert_eq!(outputs.len(), targets.len(), "batch size mismatch");
    if outputs.is_empty() {
        return 0.0;
    }
    let p = outputs.len() as f64;
    let m = outputs[0].len() as f64;
    let mut total = 0.0;
    for (o, t) in outputs.iter().zip(targets) {
        assert_eq!(o.len(), t.len(), "output width mismatch");
        match convention {
            TargetConvention::ZeroOne => {
                for (oi, ti) in o.iter().zip(t) {
                    let verdict = if *oi > 0.5 { 1.0 } else { 0.0 };
                    total += (ti - verdict).abs();
                }
            }
            TargetConvention::PlusMinusOne => {
                for (oi, ti) in o.iter().zip(t) {
                    let verdict = if *oi >= 0.0 { 1.0 } else { -1.0 };
                    total += 0.5 * (ti - verdict).abs();
                }
            }
            TargetConvention::OneHot => {
                let mut winner = 0;
                for (i, oi) in o.iter().enumerate() {
                    if *oi > o[winner] {
                        winner = i;
                    }
                }
                for (i, ti) in t.iter().enumerate() {
                    let yi = if i == winner { 1.0 } else { 0.0 };
                    total += 0.5 * (ti - yi).abs();
                }
            }
        }
    }
    match convention {
        TargetConvention::OneHot => total / p,
        _ => total / (p * m),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_hot_error_counts_misclassified_patterns() {
        // Three patterns, the third lands on the wrong winner.
        let outputs = vec![
            vec![0.4, 0.4, 0.55],
            vec![0.4, 0.55, 0.4],
            vec![0.1, 0.2, 0.8],
        ];
        let targets = vec![
            vec![0.0, 0.0, 1.0],
            vec![0.0, 1.0, 0.0],
            vec![1.0, 0.0, 0.0],
        ];
        let c = classification_error(&outputs, &targets, TargetConvention::OneHot);
        assert!((c - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn zero_one_boundary_output_counts_as_class_zero() {
        let outputs = vec![vec![0.5], vec![0.500001]];
        let targets = vec![vec![1.0], vec![1.0]];
        let c = classification_error(&outputs, &targets, TargetConvention::ZeroOne);
        assert!((c - 0.5).abs() < 1e-15);
    }

    #[test]
    fn plus_minus_error_is_zero_when_signs_agree_and_one_when_opposed() {
        let outputs = vec![vec![0.2, -3.0], vec![0.0, 7.0]];
        let right = vec![vec![1.0, -1.0], vec![1.0, 1.0]];
        let wrong = vec![vec![-1.0, 1.0], vec![-1.0, -1.0]];
        assert_eq!(
            classification_error(&outputs, &right, TargetConvention::PlusMinusOne),
            0.0
        );
        assert_eq!(
            classification_error(&outputs, &wrong, TargetConvention::PlusMinusOne),
            1.0
        );
    }

    #[test]
    fn one_hot_ties_pick_the_lowest_index() {
        let outputs = vec![vec![0.5, 0.5]];
        let hit = vec![vec![1.0, 0.0]];
        let miss = vec![vec![0.0, 1.0]];
        assert_eq!(classification_error(&outputs, &hit, TargetConvention::OneHot), 0.0);
        assert_eq!(classification_error(&outputs, &miss, TargetConvention::OneHot), 1.0);
    }

    #[test]
    fn encoding_violations_are_rejected() {
        let x = vec![vec![0.0]];
        assert!(matches!(
            LabeledSet::new(x.clone(), vec![vec![0.5]], TargetConvention::ZeroOne),
            Err(NetError::BadTargets(_))
        ));
        assert!(matches!(
            LabeledSet::new(x.clone(), vec![vec![0.0]], TargetConvention::PlusMinusOne),
            Err(NetError::BadTargets(_))
        ));
        assert!(matches!(
            LabeledSet::new(x.clone(), vec![vec![0.0]], TargetConvention::OneHot),
            Err(NetError::BadTargets(_))
        ));
        assert!(LabeledSet::new(x, vec![vec![1.0]], TargetConvention::OneHot).is_ok());
    }

    #[test]
    fn parse_and_render_roundtrip() {
        let text = "3 2 1 zero_one\n0 0 0\n0.5 -1.25 1\n1 1 0\n";
        let set = LabeledSet::parse(text).unwrap();
        assert_eq!(set.len(), 3);
        assert_eq!(set.input_dim(), 2);
        assert_eq!(set.target_dim(), 1);
        assert_eq!(set.inputs()[1], vec![0.5, -1.25]);
        assert_eq!(set.targets()[1], vec![1.0]);
        let again = LabeledSet::parse(&set.render()).unwrap();
        assert_eq!(again, set);
    }

    #[test]
    fn parse_rejects_malformed_files() {
        assert!(LabeledSet::parse("").is_err());
        assert!(LabeledSet::parse("2 1 1\n0 0\n1 1\n").is_err());
        assert!(LabeledSet::parse("2 1 1 who_knows\n0 0\n1 1\n").is_err());
        assert!(LabeledSet::parse("2 1 1 zero_one\n0 0\n").is_err());
        assert!(LabeledSet::parse("1 1 1 zero_one\n0 0 0\n").is_err());
        assert!(LabeledSet::parse("1 1 1 zero_one\n0 x\n").is_err());
        assert!(LabeledSet::parse("1 1 1 zero_one\n0 0\n1 1\n").is_err());
    }
}
