//! `--grid` parsing: `key=v1,v2;key=v3`, expanded as a cartesian product in
//! the order given.

use anyhow::{anyhow, bail, Result};
use micrographia::eval::ModelSpec;
use micrographia::models::{Gamma, LogRegParams, SvmParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Family {
    Svm,
    Logreg,
}

fn numbers(key: &str, raw: &str) -> Result<Vec<f64>> {
    raw.split(',')
        .map(|v| {
            let x: f64 = v.trim().parse().map_err(|_| anyhow!("grid `{key}`: `{v}` is not a number"))?;
            if !x.is_finite() {
                bail!("grid `{key}`: `{v}` is not finite");
            }
            Ok(x)
        })
        .collect()
}

fn gammas(raw: &str) -> Result<Vec<Gamma>> {
    raw.split(',')
        .map(|v| match v.trim() {
            "scale" => Ok(Gamma::Scale),
            other => other
                .parse::<f64>()
                .ok()
                .filter(|g| *g > 0.0 && g.is_finite())
                .map(Gamma::Value)
                .ok_or_else(|| anyhow!("grid `gamma`: `{other}` is neither `scale` nor a positive number")),
        })
        .collect()
}

/// Defaults to the single reference cell of each family.
pub fn parse_grid(family: Family, spec: Option<&str>, seed: u64) -> Result<Vec<ModelSpec>> {
    let mut cs = None;
    let mut gamma = None;
    let mut ratios = None;
    for part in spec.unwrap_or("").split(';').map(str::trim).filter(|p| !p.is_empty()) {
        let (key, values) = part.split_once('=').ok_or_else(|| anyhow!("grid entry `{part}` is not key=values"))?;
        match (family, key.trim()) {
            (_, "c") => cs = Some(numbers("c", values)?),
            (Family::Svm, "gamma") => gamma = Some(gammas(values)?),
            (Family::Logreg, "l1_ratio") => ratios = Some(numbers("l1_ratio", values)?),
            (_, other) => bail!("unknown grid key `{other}` for {family:?}"),
        }
    }
    let grid: Vec<ModelSpec> = match family {
        Family::Svm => {
            let base = &SvmParams { seed, ..SvmParams::default() };
            let cs = cs.unwrap_or_else(|| vec![base.c]);
            let gammas = gamma.unwrap_or_else(|| vec![base.gamma]);
            cs.iter()
                .flat_map(|&c| gammas.iter().map(move |&gamma| ModelSpec::Svm(SvmParams { c, gamma, ..base.clone() })))
                .collect()
        }
        Family::Logreg => {
            let base = &LogRegParams { seed, ..LogRegParams::default() };
            let cs = cs.unwrap_or_else(|| vec![base.c]);
            let ratios = ratios.unwrap_or_else(|| vec![base.l1_ratio]);
            if let Some(r) = ratios.iter().find(|r| !(0.0..=1.0).contains(*r)) {
                bail!("grid `l1_ratio`: {r} is outside [0, 1]");
            }
            cs.iter()
                .flat_map(|&c| ratios.iter().map(move |&l1_ratio| ModelSpec::Logreg(LogRegParams { c, l1_ratio, ..base.clone() })))
                .collect()
        }
    };
    if let Some(c) = grid.iter().map(ModelSpec::c).find(|c| *c <= 0.0) {
        bail!("grid `c`: {c} must be positive");
    }
    if grid.is_empty() {
        bail!("empty grid");
    }
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_reference_cells() {
        match parse_grid(Family::Logreg, None, 3).unwrap().as_slice() {
            [ModelSpec::Logreg(p)] => {
                assert_eq!((p.c, p.l1_ratio, p.seed), (0.1, 0.75, 3));
            }
            other => panic!("{other:?}"),
        }
        match parse_grid(Family::Svm, None, 0).unwrap().as_slice() {
            [ModelSpec::Svm(p)] => assert_eq!((p.c, p.gamma), (100.0, Gamma::Scale)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn cartesian_product() {
        let g = parse_grid(Family::Svm, Some("c=1,10; gamma=scale,0.5"), 0).unwrap();
        assert_eq!(g.len(), 4);
        let g = parse_grid(Family::Logreg, Some("l1_ratio=0,0.5,1"), 0).unwrap();
        assert_eq!(g.len(), 3);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(parse_grid(Family::Svm, Some("l1_ratio=0.5"), 0).is_err());
        assert!(parse_grid(Family::Logreg, Some("c=-1"), 0).is_err());
        assert!(parse_grid(Family::Logreg, Some("c=abc"), 0).is_err());
        assert!(parse_grid(Family::Logreg, Some("l1_ratio=1.5"), 0).is_err());
        assert!(parse_grid(Family::Svm, Some("gamma=0"), 0).is_err());
        assert!(parse_grid(Family::Svm, Some("c"), 0).is_err());
    }
}
