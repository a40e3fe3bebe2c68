use std::path::PathBuf;

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use ercce::fitkit::{fit_stretched, AveragingModel, ComponentSpec, Param, StretchedOptions};
use ercce::io::{read_xy, write_csv};

use crate::error::CliError;
use crate::output::{read_input, Output};

#[derive(ValueEnum, Serialize, Deserialize, Debug, Clone, Copy, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum Averaging {
    /// Phase-sensitive averaging: A = exp(-sum (2tau/T2)^x)
    Phase,
    /// Magnitude averaging: A^2 = exp(-2 sum (2tau/T2)^x) + C
    Magnitude,
}

#[derive(ValueEnum, Serialize, Deserialize, Debug, Clone, Copy, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum TimeUnit {
    S,
    Ms,
    Us,
}

impl TimeUnit {
    fn seconds(self) -> f64 {
        match self {
            TimeUnit::S => 1.0,
            TimeUnit::Ms => 1e-3,
            TimeUnit::Us => 1e-6,
        }
    }
}

#[derive(Args, Serialize, Deserialize, Debug, Clone)]
pub struct FitArgs {
    /// CSV with a header row holding echo time and echo amplitude columns
    pub input: PathBuf,
    /// Echo-time column [default: first column]
    #[arg(long = "x-col")]
    pub x_col: Option<String>,
    /// Echo amplitude column A_e (magnitude mode fits its square) [default: second column]
    #[arg(long = "y-col")]
    pub y_col: Option<String>,
    /// Unit of the echo-time column
    #[arg(long = "x-unit", value_enum, default_value_t = TimeUnit::S)]
    pub x_unit: TimeUnit,
    /// Echo averaging of the data
    #[arg(long, value_enum, default_value_t = Averaging::Phase)]
    pub mode: Averaging,
    /// Stretched components: n (nuclear) first, then p (paramagnetic)
    #[arg(long, default_value_t = 1)]
    pub components: usize,
    /// Add a pure exponential term 2tau/T2ID (instantaneous diffusion)
    #[arg(long = "id-term")]
    pub id_term: bool,
    /// Frozen parameters, e.g. T2n=27.2ms,xn=2.74 (keys T2n xn T2p xp T2ID; units s ms us)
    #[arg(long)]
    pub freeze: Option<String>,
    /// Hold the magnitude offset C fixed at this value [A^2]
    #[arg(long = "offset")]
    pub offset: Option<f64>,
    /// Multi-start count
    #[arg(long, default_value_t = 5)]
    pub starts: usize,
    /// Multi-start seed
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

fn parse_duration(text: &str) -> Result<f64, CliError> {
    let t = text.trim();
    let (num, scale) = if let Some(v) = t.strip_suffix("ms") {
        (v, 1e-3)
    } else if let Some(v) = t.strip_suffix("us") {
        (v, 1e-6)
    } else if let Some(v) = t.strip_suffix('s') {
        (v, 1.0)
    } else {
        return Err(CliError::user(format!("--freeze: `{t}` needs a unit (s, ms or us)")));
    };
    let v: f64 = num.trim().parse().map_err(|_| CliError::user(format!("--freeze: `{t}` is not a duration")))?;
    Ok(v * scale)
}

/// Component specifications implied by the count, the ID flag and the frozen values.
pub fn components(a: &FitArgs) -> Result<Vec<ComponentSpec>, CliError> {
    if !(1..=2).contains(&a.components) {
        return Err(CliError::user("--components must be 1 or 2"));
    }
    let mut specs = vec![ComponentSpec::free(); a.components];
    let mut id = a.id_term.then(ComponentSpec::exponential);
    for item in a.freeze.iter().flat_map(|f| f.split(',')).filter(|s| !s.trim().is_empty()) {
        let (key, value) = item
            .split_once('=')
            .ok_or_else(|| CliError::user(format!("--freeze: expected key=value, got `{item}`")))?;
        let key = key.trim();
        let slot = |k: usize| -> Result<usize, CliError> {
            if k < a.components {
                Ok(k)
            } else {
                Err(CliError::user(format!("--freeze: `{key}` needs --components {}", k + 1)))
            }
        };
        match key {
            "T2n" => specs[slot(0)?].t2_s = Param::Fixed(parse_duration(value)?),
            "T2p" => specs[slot(1)?].t2_s = Param::Fixed(parse_duration(value)?),
            "xn" | "xp" => {
                let k = slot(usize::from(key == "xp"))?;
                let x: f64 = value.trim().parse().map_err(|_| CliError::user(format!("--freeze: `{value}` is not a number")))?;
                specs[k].x = Param::Fixed(x);
            }
            "T2ID" => {
                let t = parse_duration(value)?;
                id = Some(ComponentSpec { t2_s: Param::Fixed(t), x: Param::Fixed(1.0) });
            }
            other => return Err(CliError::user(format!("--freeze: unknown key `{other}`"))),
        }
    }
    specs.extend(id);
    Ok(specs)
}

pub fn fit(a: FitArgs, out: &Output) -> Result<(), CliError> {
    let text = read_input(&a.input)?;
    let data: Vec<(f64, f64)> = read_xy(&text, a.x_col.as_deref(), a.y_col.as_deref())?
        .into_iter()
        .map(|(x, y)| (x * a.x_unit.seconds(), y))
        .collect();
    let averaging = match a.mode {
        Averaging::Phase => AveragingModel::phase_sensitive(),
        Averaging::Magnitude => AveragingModel::magnitude(),
    };
    if a.offset.is_some() && a.mode == Averaging::Phase {
        return Err(CliError::user("--offset applies to magnitude-averaged data only"));
    }
    let opts = StretchedOptions {
        components: components(&a)?,
        fixed_offset: a.offset,
        n_starts: a.starts.max(1),
        seed: a.seed,
        ..StretchedOptions::single(averaging)
    };
    let result = fit_stretched(&data, &opts)?;
    let rows = data.iter().map(|&(x, y)| [x, y, result.model(x)]);
    let table = write_csv(&["two_tau_s", "data", "model"], rows);
    out.emit(&a, serde_json::to_value(&result)?, &[("fit_curve.csv", table)])
}
