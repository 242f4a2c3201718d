//! CSV and JSON artifacts. Floats always carry 17 significant digits.

use std::io::{self, Write};

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};

use super::sim::SimOutput;

pub const TRAJECTORY_HEADER: &str = "t,user_id,arm,reward,regret_expected,regret_realized,mtr_expected";
pub const EVAL_HEADER: &str = "round,avg_cum_bayes_regret";

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_trajectory_csv<W: Write>(out: &mut W, sim: &SimOutput) -> io::Result<()> {
    writeln!(out, "{TRAJECTORY_HEADER}")?;
    let mtr = sim.ledger.mtr_increments();
    for (s, m) in sim.ledger.steps().iter().zip(mtr) {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            s.t,
            s.user_id,
            s.arm,
            fmt_f64(s.reward),
            fmt_f64(s.regret_expected()),
            fmt_f64(s.regret_realized()),
            fmt_f64(m)
        )?;
    }
    Ok(())
}

pub fn write_eval_csv<W: Write>(out: &mut W, sim: &SimOutput) -> io::Result<()> {
    writeln!(out, "{EVAL_HEADER}")?;
    for s in &sim.trajectory.snapshots {
        writeln!(out, "{},{}", s.round, fmt_f64(s.avg_cum_bayes_regret))?;
    }
    Ok(())
}

/// Pretty JSON whose floats use the same 17-digit form as the CSVs.
struct SigFigFormatter<'a>(PrettyFormatter<'a>);

impl Formatter for SigFigFormatter<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        write!(w, "{}", fmt_f64(value))
    }

    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }

    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }

    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }

    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }

    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }

    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

pub fn write_json<W: Write, T: Serialize>(out: &mut W, value: &T) -> io::Result<()> {
    let mut ser = serde_json::Serializer::with_formatter(&mut *out, SigFigFormatter(PrettyFormatter::new()));
    value.serialize(&mut ser).map_err(io::Error::other)?;
    writeln!(out)
}
