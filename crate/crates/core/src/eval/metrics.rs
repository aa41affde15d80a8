use std::io::Write;

use super::{decision_error, heldout_re, EvalReport, SweepInputs};
use crate::classmodel::ClassModel;
use crate::error::Result;
use crate::registry::Registry;

/// An evaluation that fills some columns of an [`EvalReport`].
pub trait Metric: Send + Sync {
    fn name(&self) -> &'static str;

    /// Leaves the report untouched when the inputs it needs are absent.
    fn evaluate(&self, model: &ClassModel, inputs: &SweepInputs<'_>, report: &mut EvalReport) -> Result<()>;

    fn header(&self) -> &'static str;

    fn row(&self, report: &EvalReport) -> String;
}

/// Mean held-out relative entropy on the training, test and new-noun sets.
pub struct RelativeEntropyMetric;

/// Error rates on the deleted-pair decision task.
pub struct DecisionMetric;

fn cell(x: Option<f64>) -> String {
    x.map_or_else(|| "nan".to_string(), |v| v.to_string())
}

impl Metric for RelativeEntropyMetric {
    fn name(&self) -> &'static str {
        "re"
    }

    fn evaluate(&self, model: &ClassModel, inputs: &SweepInputs<'_>, report: &mut EvalReport) -> Result<()> {
        let slots = [
            (inputs.train, &mut report.train_re, &mut report.train_re_sum),
            (inputs.test, &mut report.test_re, &mut report.test_re_sum),
            (inputs.new, &mut report.new_re, &mut report.new_re_sum),
        ];
        for (corpus, mean, sum) in slots {
            if let Some(corpus) = corpus {
                let s = heldout_re(model, corpus)?;
                *mean = Some(s.mean_bits);
                *sum = Some(s.sum_bits);
            }
        }
        Ok(())
    }

    fn header(&self) -> &'static str {
        "model_size\tbeta\ttrain_re_bits\ttest_re_bits\tnew_re_bits"
    }

    fn row(&self, r: &EvalReport) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}",
            r.model_size,
            r.beta,
            cell(r.train_re),
            cell(r.test_re),
            cell(r.new_re)
        )
    }
}

impl Metric for DecisionMetric {
    fn name(&self) -> &'static str {
        "decision"
    }

    fn evaluate(&self, model: &ClassModel, inputs: &SweepInputs<'_>, report: &mut EvalReport) -> Result<()> {
        if let Some(set) = inputs.triples {
            let e = decision_error(model, set)?;
            report.decision_error_all = Some(e.error_all);
            report.decision_error_exceptional = e.error_exceptional;
            report.n_triples = e.scored;
        }
        Ok(())
    }

    fn header(&self) -> &'static str {
        "model_size\tbeta\terr_all\terr_exceptional\tn_triples"
    }

    fn row(&self, r: &EvalReport) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}",
            r.model_size,
            r.beta,
            cell(r.decision_error_all),
            cell(r.decision_error_exceptional),
            r.n_triples
        )
    }
}

pub fn metric_registry() -> Registry<dyn Metric> {
    let mut r: Registry<dyn Metric> = Registry::new("metric");
    r.register(RelativeEntropyMetric.name(), Box::new(RelativeEntropyMetric));
    r.register(DecisionMetric.name(), Box::new(DecisionMetric));
    r
}

/// Writes one TSV table for `metric`, header first.
pub fn write_tsv<W: Write>(metric: &dyn Metric, reports: &[EvalReport], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{}", metric.header())?;
    for r in reports {
        writeln!(out, "{}", metric.row(r))?;
    }
    Ok(())
}
