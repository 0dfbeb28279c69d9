use super::config::{LossVariant, SearchConfig, ZeroOneScope};
use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::searchspace::RelaxMode;

fn gated(tape: &mut Tape, alphas: &[Var]) -> Result<Vec<Var>> {
    if alphas.is_empty() {
        return Err(Error::invalid("zero_one_loss", "no architecture weights"));
    }
    alphas.iter().map(|&a| tape.sigmoid(a)).collect()
}

/// −mean over every entry of (z − ½)², or of |z − ½| for the absolute
/// variant, where `z` are already-relaxed weights in [0, 1].
pub fn polarization(tape: &mut Tape, z: &[Var], variant: LossVariant) -> Result<Option<Var>> {
    if z.is_empty() {
        return Err(Error::invalid("zero_one_loss", "no architecture weights"));
    }
    let all = if z.len() == 1 { z[0] } else { tape.concat(z)? };
    let centred = tape.shift_by(all, -0.5)?;
    let dist = match variant {
        LossVariant::None => return Ok(None),
        LossVariant::Squared => tape.square(centred)?,
        LossVariant::Absolute => tape.abs(centred)?,
    };
    let m = tape.mean(dist)?;
    Ok(Some(tape.scale_by(m, -1.0)?))
}

/// −(1/N) Σ (σ(α) − ½)² over every entry of `alphas`.
pub fn zero_one_loss(tape: &mut Tape, alphas: &[Var]) -> Result<Var> {
    let z = gated(tape, alphas)?;
    Ok(polarization(tape, &z, LossVariant::Squared)?.expect("squared variant"))
}

/// −(1/N) Σ |σ(α) − ½|; the subgradient at exactly ½ is 0.
pub fn zero_one_loss_abs(tape: &mut Tape, alphas: &[Var]) -> Result<Var> {
    let z = gated(tape, alphas)?;
    Ok(polarization(tape, &z, LossVariant::Absolute)?.expect("absolute variant"))
}

/// Loss for the α step and its auxiliary part.
#[derive(Debug, Clone, Copy)]
pub struct Objective {
    pub total: Var,
    pub zero_one: Option<Var>,
}

/// `val_loss + w01 · L` where `L` is taken over the relaxed weights of every
/// α row: sigmoid gates, or per-row softmax weights in softmax mode.
///
/// `groups` partitions the α rows; it only matters for the per-cell scope.
pub fn alpha_objective(
    tape: &mut Tape,
    val_loss: Var,
    groups: &[Vec<Var>],
    mode: RelaxMode,
    cfg: &SearchConfig,
) -> Result<Objective> {
    if tape.value(val_loss).len() != 1 {
        return Err(Error::NonScalarLoss(tape.shape(val_loss).to_vec()));
    }
    if cfg.loss_variant == LossVariant::None {
        return Ok(Objective {
            total: val_loss,
            zero_one: None,
        });
    }
    let mut parts = Vec::new();
    let scoped: Vec<&[Var]> = match cfg.zero_one_scope {
        ZeroOneScope::Joint => vec![],
        ZeroOneScope::PerCell => groups.iter().map(Vec::as_slice).collect(),
    };
    let joint: Vec<Var> = groups.iter().flatten().copied().collect();
    let scopes = if scoped.is_empty() { vec![joint.as_slice()] } else { scoped };
    for rows in scopes {
        let z = rows
            .iter()
            .map(|&r| match mode {
                RelaxMode::SoftmaxExclusive => tape.softmax(r),
                RelaxMode::SigmoidCollaborative => tape.sigmoid(r),
            })
            .collect::<Result<Vec<_>>>()?;
        parts.push(polarization(tape, &z, cfg.loss_variant)?.expect("variant is not none"));
    }
    let zero_one = tape.sum_all(&parts)?;
    let weighted = tape.scale_by(zero_one, cfg.w01)?;
    Ok(Objective {
        total: tape.add(val_loss, weighted)?,
        zero_one: Some(zero_one),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{grad_check, Tensor};

    fn leaves(tape: &mut Tape, rows: &[Vec<f64>]) -> Vec<Var> {
        rows.iter()
            .map(|r| tape.variable(vec![r.len()], r.clone()).unwrap())
            .collect()
    }

    #[test]
    fn fair_point_is_the_maximum() {
        let mut tape = Tape::new();
        let a = leaves(&mut tape, &[vec![0.0; 7], vec![0.0; 7]]);
        let l = zero_one_loss(&mut tape, &a).unwrap();
        assert_eq!(tape.scalar(l), 0.0);
        let g = tape.backward(l).unwrap();
        assert!(a.iter().all(|&v| g.dense(v).iter().all(|&x| x == 0.0)));
    }

    #[test]
    fn saturation_values() {
        let mut tape = Tape::new();
        let a = leaves(&mut tape, &[vec![40.0; 5]]);
        let l = zero_one_loss(&mut tape, &a).unwrap();
        assert!((tape.scalar(l) + 0.25).abs() < 1e-15);
        let b = leaves(&mut tape, &[vec![0.0, 40.0]]);
        let l = zero_one_loss(&mut tape, &b).unwrap();
        assert!((tape.scalar(l) + 0.125).abs() < 1e-15);
        let l = zero_one_loss_abs(&mut tape, &a).unwrap();
        assert!((tape.scalar(l) + 0.5).abs() < 1e-15);
        let c = leaves(&mut tape, &[vec![0.0; 3]]);
        let l = zero_one_loss_abs(&mut tape, &c).unwrap();
        assert_eq!(tape.scalar(l), 0.0);
    }

    #[test]
    fn empty_list_is_an_error() {
        let mut tape = Tape::new();
        assert!(zero_one_loss(&mut tape, &[]).is_err());
        assert!(zero_one_loss_abs(&mut tape, &[]).is_err());
    }

    #[test]
    fn absolute_variant_pushes_outward_with_unit_slope() {
        // d/dz of −(1/N)|z − ½| at z = 0.6 is −1/N.
        let n = 4.0;
        let mut tape = Tape::new();
        let z = tape.variable(vec![4], vec![0.6, 0.2, 0.5, 0.9]).unwrap();
        let l = polarization(&mut tape, &[z], LossVariant::Absolute).unwrap().unwrap();
        let g = tape.backward(l).unwrap().dense(z);
        assert_eq!(g[0], -1.0 / n);
        assert_eq!(g[1], 1.0 / n);
        assert_eq!(g[2], 0.0);
    }

    #[test]
    fn squared_gradient_grows_linearly_from_the_centre() {
        let mut tape = Tape::new();
        let z = tape.variable(vec![3], vec![0.5, 0.6, 0.7]).unwrap();
        let l = polarization(&mut tape, &[z], LossVariant::Squared).unwrap().unwrap();
        let g = tape.backward(l).unwrap().dense(z);
        // −(2/3)(z − ½)
        assert_eq!(g[0], 0.0);
        assert!((g[1] * 2.0 - g[2]).abs() < 1e-15);
        assert!((g[1] + 2.0 / 3.0 * 0.1).abs() < 1e-15);
    }

    #[test]
    fn objective_combinations() {
        let mut cfg = SearchConfig::fair(crate::searchspace::Space::S1);
        let mut tape = Tape::new();
        let val = tape.constant(vec![1], vec![1.3]).unwrap();
        let rows = leaves(&mut tape, &[vec![40.0; 7], vec![40.0; 7]]);
        let o = alpha_objective(&mut tape, val, &[rows.clone()], RelaxMode::SigmoidCollaborative, &cfg).unwrap();
        assert!((tape.scalar(o.total) - (1.3 - 2.5)).abs() < 1e-12);
        cfg.w01 = 0.0;
        let o = alpha_objective(&mut tape, val, &[rows.clone()], RelaxMode::SigmoidCollaborative, &cfg).unwrap();
        assert_eq!(tape.scalar(o.total), 1.3);
        cfg.w01 = 10.0;
        let zero = leaves(&mut tape, &[vec![0.0; 7]]);
        let o = alpha_objective(&mut tape, val, &[zero], RelaxMode::SigmoidCollaborative, &cfg).unwrap();
        assert_eq!(tape.scalar(o.total), 1.3);
        cfg.loss_variant = LossVariant::None;
        let o = alpha_objective(&mut tape, val, &[rows], RelaxMode::SigmoidCollaborative, &cfg).unwrap();
        assert_eq!(o.total, val);
        assert!(o.zero_one.is_none());
    }

    #[test]
    fn per_cell_scope_sums_group_means() {
        let mut cfg = SearchConfig::fair(crate::searchspace::Space::S1);
        cfg.w01 = 1.0;
        cfg.zero_one_scope = ZeroOneScope::PerCell;
        let mut tape = Tape::new();
        let val = tape.constant(vec![1], vec![0.0]).unwrap();
        let a = leaves(&mut tape, &[vec![40.0; 2]]);
        let b = leaves(&mut tape, &[vec![0.0; 6]]);
        let o = alpha_objective(&mut tape, val, &[a, b], RelaxMode::SigmoidCollaborative, &cfg).unwrap();
        assert!((tape.scalar(o.total) + 0.25).abs() < 1e-15);
    }

    #[test]
    fn objective_gradients_match_finite_differences() {
        let rows = vec![
            Tensor::new(vec![4], vec![0.3, -1.1, 0.8, 2.0]).unwrap(),
            Tensor::new(vec![4], vec![-0.4, 0.05, 1.7, -2.2]).unwrap(),
        ];
        let scale = Tensor::new(vec![1], vec![0.7]).unwrap();
        for mode in [RelaxMode::SoftmaxExclusive, RelaxMode::SigmoidCollaborative] {
            for variant in [LossVariant::Squared, LossVariant::Absolute] {
                let mut cfg = SearchConfig::default();
                cfg.loss_variant = variant;
                let mut params = rows.clone();
                params.push(scale.clone());
                let err = grad_check(&params, 1e-5, |tape, v| {
                    // A val loss that also depends on α, so both paths are checked.
                    let s = tape.sigmoid(v[0])?;
                    let m = tape.mean(s)?;
                    let val = tape.mul(m, v[2])?;
                    Ok(alpha_objective(tape, val, &[v[..2].to_vec()], mode, &cfg)?.total)
                })
                .unwrap();
                assert!(err < 1e-4, "{mode:?} {variant:?}: {err}");
            }
        }
    }
}
