//! CSV formats for comparisons, ratings, fits, similarity pairs and labels.

use std::io::{Read, Write};
use std::str::FromStr;

use csv::{ReaderBuilder, StringRecord, Writer};

use super::{comparison_interval, BtFit, ComparisonRecord, EvalError, LabeledPair, Outcome, PairedHypothesis, QuasiVariances, Rating, SimilarityReport};
use crate::model::Metric;
use crate::protocol::Relation;

pub const COMPARISON_HEADER: [&str; 4] = ["first", "second", "metric", "outcome"];
pub const RATING_HEADER: [&str; 4] = ["rater", "hypothesis", "metric", "rating"];
pub const FIT_HEADER: [&str; 5] = ["system", "beta", "quasi_variance", "lo95", "hi95"];
pub const PAIR_HEADER: [&str; 3] = ["background", "generated", "gold"];
pub const LABEL_HEADER: [&str; 2] = ["predicted", "truth"];
pub const LABELED_PAIR_HEADER: [&str; 4] = ["source", "target", "hypothesis", "label"];

/// Reads rows after checking the header; `parse` receives the fields and
/// returns a message on failure. Row numbers count the header as row 1.
fn read_rows<R: Read, T>(
    reader: R,
    header: &[&str],
    mut parse: impl FnMut(&StringRecord) -> Result<T, String>,
) -> Result<Vec<T>, EvalError> {
    let mut rdr = ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let found = rdr.headers()?.clone();
    let got: Vec<&str> = found.iter().collect();
    if got != header {
        return Err(EvalError::Schema {
            row: 1,
            message: format!("expected header `{}`, found `{}`", header.join(","), got.join(",")),
        });
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| EvalError::Schema {
            row,
            message: e.to_string(),
        })?;
        if rec.len() != header.len() {
            return Err(EvalError::Schema {
                row,
                message: format!("expected {} fields, found {}", header.len(), rec.len()),
            });
        }
        out.push(parse(&rec).map_err(|message| EvalError::Schema { row, message })?);
    }
    Ok(out)
}

fn nonempty(rec: &StringRecord, i: usize, name: &str) -> Result<String, String> {
    let v = rec[i].to_string();
    if v.is_empty() {
        Err(format!("empty `{name}`"))
    } else {
        Ok(v)
    }
}

fn metric(s: &str) -> Result<Metric, String> {
    Metric::from_str(s).map_err(|e| e.to_string())
}

fn outcome(s: &str) -> Result<Outcome, String> {
    match s.to_ascii_lowercase().as_str() {
        "first" => Ok(Outcome::FirstWins),
        "second" => Ok(Outcome::SecondWins),
        "tie" => Ok(Outcome::Tie),
        other => Err(format!("unknown outcome `{other}` (expected first, second or tie)")),
    }
}

fn outcome_str(o: Outcome) -> &'static str {
    match o {
        Outcome::FirstWins => "first",
        Outcome::SecondWins => "second",
        Outcome::Tie => "tie",
    }
}

fn relation(s: &str) -> Result<Relation, String> {
    match s.to_ascii_lowercase().as_str() {
        "positive" => Ok(Relation::Positive),
        "negative" => Ok(Relation::Negative),
        other => Err(format!("unknown label `{other}` (expected positive or negative)")),
    }
}

pub fn read_comparisons<R: Read>(reader: R) -> Result<Vec<ComparisonRecord>, EvalError> {
    read_rows(reader, &COMPARISON_HEADER, |r| {
        let first = nonempty(r, 0, "first")?;
        let second = nonempty(r, 1, "second")?;
        if first == second {
            return Err(format!("`{first}` compared with itself"));
        }
        Ok(ComparisonRecord::new(first, second, metric(&r[2])?, outcome(&r[3])?))
    })
}

pub fn write_comparisons<W: Write>(writer: W, records: &[ComparisonRecord]) -> Result<(), EvalError> {
    let mut w = Writer::from_writer(writer);
    w.write_record(COMPARISON_HEADER)?;
    for r in records {
        w.write_record([r.first.as_str(), r.second.as_str(), &r.metric.name().to_lowercase(), outcome_str(r.outcome)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_ratings<R: Read>(reader: R) -> Result<Vec<Rating>, EvalError> {
    read_rows(reader, &RATING_HEADER, |r| {
        Ok(Rating {
            rater: nonempty(r, 0, "rater")?,
            hypothesis: nonempty(r, 1, "hypothesis")?,
            metric: metric(&r[2])?,
            rating: r[3].parse().map_err(|_| format!("rating `{}` is not a positive integer", &r[3]))?,
        })
    })
}

pub fn write_ratings<W: Write>(writer: W, ratings: &[Rating]) -> Result<(), EvalError> {
    let mut w = Writer::from_writer(writer);
    w.write_record(RATING_HEADER)?;
    for r in ratings {
        w.write_record([
            r.rater.as_str(),
            r.hypothesis.as_str(),
            &r.metric.name().to_lowercase(),
            &r.rating.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One row per system with its ability, quasi-variance and 95%
/// comparison interval.
pub fn write_fits<W: Write>(writer: W, fit: &BtFit, qv: &QuasiVariances) -> Result<(), EvalError> {
    let mut w = Writer::from_writer(writer);
    w.write_record(FIT_HEADER)?;
    for s in &fit.systems {
        let (lo, hi) = comparison_interval(fit, qv, s).ok_or_else(|| EvalError::Input(format!("no quasi-variance for `{s}`")))?;
        w.write_record([
            s.clone(),
            fit.beta[s].to_string(),
            qv.q[s].to_string(),
            lo.to_string(),
            hi.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitRow {
    pub system: String,
    pub beta: f64,
    pub quasi_variance: f64,
    pub lo95: f64,
    pub hi95: f64,
}

pub fn read_fits<R: Read>(reader: R) -> Result<Vec<FitRow>, EvalError> {
    let num = |r: &StringRecord, i: usize| -> Result<f64, String> {
        r[i].parse().map_err(|_| format!("`{}` is not a number", &r[i]))
    };
    read_rows(reader, &FIT_HEADER, |r| {
        Ok(FitRow {
            system: nonempty(r, 0, "system")?,
            beta: num(r, 1)?,
            quasi_variance: num(r, 2)?,
            lo95: num(r, 3)?,
            hi95: num(r, 4)?,
        })
    })
}

pub fn read_similarity_pairs<R: Read>(reader: R) -> Result<Vec<PairedHypothesis>, EvalError> {
    read_rows(reader, &PAIR_HEADER, |r| {
        Ok(PairedHypothesis {
            background: nonempty(r, 0, "background")?,
            generated: nonempty(r, 1, "generated")?,
            gold: nonempty(r, 2, "gold")?,
        })
    })
}

pub fn write_similarity<W: Write>(writer: W, report: &SimilarityReport) -> Result<(), EvalError> {
    let mut w = Writer::from_writer(writer);
    w.write_record(["pair_type", "similarity"])?;
    for (kind, s) in report.rows() {
        w.write_record([kind.to_string(), s.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_labels<R: Read>(reader: R) -> Result<(Vec<Relation>, Vec<Relation>), EvalError> {
    let rows = read_rows(reader, &LABEL_HEADER, |r| Ok((relation(&r[0])?, relation(&r[1])?)))?;
    Ok(rows.into_iter().unzip())
}

pub fn read_labeled_pairs<R: Read>(reader: R) -> Result<Vec<LabeledPair>, EvalError> {
    read_rows(reader, &LABELED_PAIR_HEADER, |r| {
        Ok(LabeledPair {
            source: nonempty(r, 0, "source")?,
            target: nonempty(r, 1, "target")?,
            hypothesis: nonempty(r, 2, "hypothesis")?,
            label: relation(&r[3])?,
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comparisons_round_trip() {
        let recs = vec![
            ComparisonRecord::new("A", "B", Metric::Novelty, Outcome::FirstWins),
            ComparisonRecord::new("B", "C", Metric::Verifiability, Outcome::Tie),
        ];
        let mut buf = Vec::new();
        write_comparisons(&mut buf, &recs).unwrap();
        assert_eq!(read_comparisons(buf.as_slice()).unwrap(), recs);
    }

    #[test]
    fn schema_errors_cite_rows() {
        let csv = "first,second,metric,outcome\nA,B,novelty,first\nA,B,novelty,draw\n";
        match read_comparisons(csv.as_bytes()) {
            Err(EvalError::Schema { row, message }) => {
                assert_eq!(row, 3);
                assert!(message.contains("draw"));
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            read_comparisons("a,b\n".as_bytes()),
            Err(EvalError::Schema { row: 1, .. })
        ));
    }
}
