//! Thread-parallel ensembles. Paths run concurrently and are merged in index
//! order, so the result is identical to the sequential ensemble.

use metastab_core::model::Params;
use metastab_core::simulate::{
    ensemble_burn_in, path_occupation, EnsembleOptions, NamedRegion, OccupationHistogram,
    SimConfig, SimError,
};
use rayon::prelude::*;

pub fn run_ensemble_parallel(
    p: &Params,
    base: &SimConfig,
    regions: &[NamedRegion],
    opts: &EnsembleOptions,
) -> Result<OccupationHistogram, SimError> {
    let burn_in = ensemble_burn_in(base, opts)?;
    base.validate(p)?;
    let per_path: Vec<Result<OccupationHistogram, SimError>> = (0..opts.n_paths)
        .into_par_iter()
        .map(|path| {
            path_occupation(
                p,
                base,
                path,
                opts.start.initial(base, path),
                regions,
                burn_in,
            )
        })
        .collect();
    let mut total = OccupationHistogram::new(regions.to_vec(), burn_in);
    // First failure in path order.
    for h in per_path {
        total.merge(&h?);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use metastab_core::model::{RawParams, State};
    use metastab_core::simulate::{run_ensemble_with, well_regions, StartLayout};

    #[test]
    fn parallel_matches_sequential_bitwise() {
        let p = RawParams {
            epsilon: 0.3,
            sigma1: 0.2,
            ..RawParams::default()
        }
        .validate()
        .unwrap();
        let c = SimConfig {
            dt: 1e-3,
            t_final: 20.0,
            seed: 9,
            initial: State::new(0.5, 0.0),
        };
        let regions = well_regions(0.1);
        let opts = EnsembleOptions {
            start: StartLayout::AlternateStable,
            ..EnsembleOptions::new(6)
        };
        let a = run_ensemble_parallel(&p, &c, &regions, &opts).unwrap();
        let b = run_ensemble_with(&p, &c, &regions, &opts).unwrap();
        assert_eq!(a, b);
    }
}
