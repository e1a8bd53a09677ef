//! Dispatch parsed descriptors to the protocol library and collect results
//! as JSON documents plus tabular rows.

use crate::descriptor::{
    matrix_json, parse_matrix, parse_vector, vector_json, CheckKind, ConvertDescriptor,
    DescriptorError, Direction, EngineerDescriptor, ExperimentDescriptor, IdentityCheckDescriptor,
    MeasureDescriptor, MeasureKind, PsiSpec, ReconstructDescriptor, RunMode, SamplingMode,
    TargetSpec, TelemanipDescriptor, TelemanipMode, TuneDir,
};
use kerrconv_core::converter::{
    convert_a_to_b, convert_b_to_a, convert_unconditional_a_to_b, convert_unconditional_b_to_a,
    repeat_until_success, ConverterConfig, OutcomeRecord,
};
use kerrconv_core::engineering::{
    decompose_target, run_engineering, run_engineering_unconditional, EngineeringConfig,
};
use kerrconv_core::fock::{
    state_fidelity, trace_distance, DensityOperator, FockSpace, Mode, QuantumState, StateVector,
};
use kerrconv_core::linalg;
use kerrconv_core::measurement::{
    diagonalize_experimentally, expectation, overlap_probe, qnd_purify, reconstruct_fock_matrix,
    Probe, ProbeMode, TuneDirection, TuningSettings,
};
use kerrconv_core::optics::MultiportUnitary;
use kerrconv_core::oracle::{self, TwoConverterRun};
use kerrconv_core::telemanip::{
    reduced_states_fig3, reduced_states_fig4, run_telemanip_conditional,
    run_telemanip_unconditional,
};
use kerrconv_core::C64;
use ndarray::Array1;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Descriptor(#[from] DescriptorError),
    #[error("protocol error: {0}")]
    Protocol(String),
}

macro_rules! protocol_err {
    ($e:expr) => {
        RunError::Protocol($e.to_string())
    };
}

/// One row of the tabular output.
pub struct CsvRow {
    pub label: String,
    pub probability: f64,
    pub fidelity: Option<f64>,
    pub trials: Option<u64>,
}

pub struct RunOutput {
    pub results: Value,
    pub rows: Vec<CsvRow>,
    /// Per-cycle tuner signals, when a reconstruction ran.
    pub signal_csv: Option<String>,
}

pub fn run(descriptor: &ExperimentDescriptor, force_oracle: bool) -> Result<RunOutput, RunError> {
    match descriptor {
        ExperimentDescriptor::Convert(d) => run_convert(d, force_oracle),
        ExperimentDescriptor::Engineer(d) => run_engineer(d, force_oracle),
        ExperimentDescriptor::Measure(d) => run_measure(d),
        ExperimentDescriptor::Reconstruct(d) => run_reconstruct(d),
        ExperimentDescriptor::Telemanip(d) => run_telemanip(d, force_oracle),
        ExperimentDescriptor::IdentityCheck(d) => run_identity_check(d),
    }
}

fn source_input(
    n: u32,
    spec: &Option<crate::descriptor::JsonVector>,
    phi: f64,
) -> Result<QuantumState, RunError> {
    let space = FockSpace::source_space(n);
    let amps = match spec {
        Some(v) => parse_vector(v),
        None => kerrconv_core::converter::phase_state_amplitudes(n, phi),
    };
    let state = StateVector::new(space, amps).map_err(|e| protocol_err!(e))?;
    Ok(QuantumState::Pure(state))
}

fn outcome_json(rec: &OutcomeRecord, fidelity: Option<f64>) -> Value {
    json!({
        "label": serde_json::to_value(&rec.label).unwrap(),
        "probability": rec.probability,
        "fidelity": fidelity,
        "state": rec.post_state.as_ref().map(|s| s.to_json()),
    })
}

fn label_string(rec: &OutcomeRecord) -> String {
    serde_json::to_value(&rec.label)
        .ok()
        .and_then(|v| serde_json::to_string(&v).ok())
        .unwrap_or_else(|| "?".into())
}

fn run_convert(d: &ConvertDescriptor, force_oracle: bool) -> Result<RunOutput, RunError> {
    let cfg = match &d.psi {
        PsiSpec::Phase(tag) if tag == "phase" => ConverterConfig::canonical(d.n, d.phi),
        PsiSpec::Phase(other) => return Err(protocol_err!(format!("unknown psi spec {other:?}"))),
        PsiSpec::State(v) => ConverterConfig::with_detection_state(d.n, parse_vector(v))
            .map_err(|e| protocol_err!(e))?,
    };
    let input = source_input(d.n, &d.input, 0.0)?;
    let map = cfg.isomorphism();
    let lifted = map.lift(&input).map_err(|e| protocol_err!(e))?;
    let mut rows = Vec::new();
    let results = match (&d.direction, d.mode) {
        (Direction::A2b, RunMode::Conditional) => {
            let (probability, post, path) = if force_oracle {
                let o = oracle::convert_a_to_b(&input, &cfg, 1).map_err(|e| protocol_err!(e))?;
                (o.probability, Some(o.post_state), "oracle")
            } else {
                let rec = convert_a_to_b(&input, &cfg).map_err(|e| protocol_err!(e))?;
                (rec.probability, rec.post_state, "fast")
            };
            let fid = post
                .as_ref()
                .map(|s| state_fidelity(s, &lifted).map_err(|e| protocol_err!(e)))
                .transpose()?;
            rows.push(CsvRow {
                label: "detected-target".into(),
                probability,
                fidelity: fid,
                trials: None,
            });
            json!({
                "path": path,
                "probability": probability,
                "fidelity_with_lifted_input": fid,
                "state": post.map(|s| s.to_json()),
            })
        }
        (Direction::B2a, RunMode::Conditional) => {
            let (probability, post, path) = if force_oracle {
                let o = oracle::convert_b_to_a(&lifted, &cfg, 1).map_err(|e| protocol_err!(e))?;
                (o.probability, Some(o.post_state), "oracle")
            } else {
                let rec = convert_b_to_a(&lifted, &cfg).map_err(|e| protocol_err!(e))?;
                (rec.probability, rec.post_state, "fast")
            };
            let fid = post
                .as_ref()
                .map(|s| state_fidelity(s, &input).map_err(|e| protocol_err!(e)))
                .transpose()?;
            rows.push(CsvRow {
                label: "channel-0-click".into(),
                probability,
                fidelity: fid,
                trials: None,
            });
            json!({
                "path": path,
                "probability": probability,
                "fidelity_with_input": fid,
                "state": post.map(|s| s.to_json()),
            })
        }
        (Direction::A2b, RunMode::Unconditional) => {
            let (branches, aggregate) =
                convert_unconditional_a_to_b(&input, &cfg).map_err(|e| protocol_err!(e))?;
            let branch_json: Vec<Value> = branches
                .iter()
                .map(|b| {
                    let fid = b
                        .post_state
                        .as_ref()
                        .map(|s| state_fidelity(s, &lifted).unwrap_or(f64::NAN));
                    rows.push(CsvRow {
                        label: label_string(b),
                        probability: b.probability,
                        fidelity: fid,
                        trials: None,
                    });
                    outcome_json(b, fid)
                })
                .collect();
            json!({
                "aggregate_probability": aggregate.probability,
                "branches": branch_json,
            })
        }
        (Direction::B2a, RunMode::Unconditional) => {
            let (branches, aggregate) =
                convert_unconditional_b_to_a(&lifted, &cfg).map_err(|e| protocol_err!(e))?;
            let branch_json: Vec<Value> = branches
                .iter()
                .map(|b| {
                    rows.push(CsvRow {
                        label: label_string(b),
                        probability: b.probability,
                        fidelity: None,
                        trials: None,
                    });
                    outcome_json(b, None)
                })
                .collect();
            let stats = match d.trials {
                Some(runs) => {
                    let seed = d.seed.unwrap_or(0);
                    let s = repeat_until_success(&cfg, runs, seed).map_err(|e| protocol_err!(e))?;
                    rows.push(CsvRow {
                        label: "repeat-until-success".into(),
                        probability: 1.0,
                        fidelity: None,
                        trials: Some((s.mean_trials * s.runs as f64) as u64),
                    });
                    Some(serde_json::to_value(&s).unwrap())
                }
                None => None,
            };
            json!({
                "aggregate_probability": aggregate.probability,
                "branches": branch_json,
                "trial_statistics": stats,
            })
        }
    };
    Ok(RunOutput {
        results,
        rows,
        signal_csv: None,
    })
}

fn engineering_config(
    target: &TargetSpec,
    phi: f64,
) -> Result<(EngineeringConfig, Option<Value>), RunError> {
    match target {
        TargetSpec::Matrix(m) => {
            let a = parse_matrix(m)?;
            let (cfg, scale) = decompose_target(&a).map_err(|e| protocol_err!(e))?;
            let info = json!({
                "scale": [scale.scale.re, scale.scale.im],
                "gain": scale.gain,
                "transmittances": cfg.effective_transmittances(),
            });
            Ok((cfg.with_phi(phi), Some(info)))
        }
        TargetSpec::Parts { u, tk, ur } => {
            let u = parse_matrix(u)?;
            let ur = parse_matrix(ur)?;
            let d = u.nrows();
            if d == 0 {
                return Err(protocol_err!("empty target"));
            }
            let n = (d - 1) as u32;
            let modes: Vec<Mode> = (0..d).map(Mode::b).collect();
            let cfg = EngineeringConfig::new(
                n,
                MultiportUnitary::new(modes.clone(), u).map_err(|e| protocol_err!(e))?,
                MultiportUnitary::new(modes, ur).map_err(|e| protocol_err!(e))?,
                tk.clone(),
            )
            .map_err(|e| protocol_err!(e))?;
            Ok((cfg.with_phi(phi), None))
        }
    }
}

fn run_engineer(d: &EngineerDescriptor, force_oracle: bool) -> Result<RunOutput, RunError> {
    let (cfg, decomposition) = engineering_config(&d.target, d.phi)?;
    let input = source_input(cfg.n(), &d.input, 0.0)?;
    let mut rows = Vec::new();
    let results = match d.mode {
        RunMode::Conditional => {
            let reference = run_engineering(&input, &cfg).map_err(|e| protocol_err!(e))?;
            let (probability, post, path) = if force_oracle {
                let o = oracle::two_converter(
                    &input,
                    &cfg,
                    &TwoConverterRun {
                        detected_phase: cfg.phi(),
                        ..Default::default()
                    },
                    1,
                )
                .map_err(|e| protocol_err!(e))?;
                (o.probability, Some(o.post_state), "oracle")
            } else {
                (reference.probability, reference.post_state.clone(), "fast")
            };
            let fid = match (&post, &reference.post_state) {
                (Some(a), Some(b)) => Some(state_fidelity(a, b).map_err(|e| protocol_err!(e))?),
                _ => None,
            };
            rows.push(CsvRow {
                label: label_string(&reference),
                probability,
                fidelity: fid,
                trials: None,
            });
            json!({
                "path": path,
                "probability": probability,
                "decomposition": decomposition,
                "state": post.map(|s| s.to_json()),
            })
        }
        RunMode::Unconditional => {
            let out = run_engineering_unconditional(&input, &cfg).map_err(|e| protocol_err!(e))?;
            let reference = out.aggregate.post_state.clone();
            let branch_json: Vec<Value> = out
                .branches
                .iter()
                .map(|b| {
                    let fid = match (&b.post_state, &reference) {
                        (Some(a), Some(r)) => state_fidelity(a, r).ok(),
                        _ => None,
                    };
                    rows.push(CsvRow {
                        label: label_string(b),
                        probability: b.probability,
                        fidelity: fid,
                        trials: None,
                    });
                    outcome_json(b, fid)
                })
                .collect();
            rows.push(CsvRow {
                label: "no-click".into(),
                probability: out.failure.probability,
                fidelity: None,
                trials: None,
            });
            json!({
                "aggregate_probability": out.aggregate.probability,
                "failure_probability": out.failure.probability,
                "decomposition": decomposition,
                "branches": branch_json,
                "state": out.aggregate.post_state.as_ref().map(|s| s.to_json()),
            })
        }
    };
    Ok(RunOutput {
        results,
        rows,
        signal_csv: None,
    })
}

fn run_measure(d: &MeasureDescriptor) -> Result<RunOutput, RunError> {
    let rho_m = parse_matrix(&d.rho)?;
    let n = (rho_m.nrows() - 1) as u32;
    let rho = DensityOperator::new(FockSpace::source_space(n), rho_m.clone())
        .map_err(|e| protocol_err!(e))?;
    let probe_mode = match d.mode {
        Some(SamplingMode::Shots) => ProbeMode::Shots {
            shots: d.shots.unwrap_or(100_000),
            seed: d.seed.unwrap_or(0),
        },
        _ => ProbeMode::Analytic,
    };
    let mut rows = Vec::new();
    let results = match d.what {
        MeasureKind::Overlap => {
            let u =
                d.u.as_ref()
                    .ok_or_else(|| protocol_err!("overlap probe needs \"U\""))?;
            let u = parse_matrix(u)?;
            let modes: Vec<Mode> = (0..=n as usize).map(Mode::b).collect();
            let cfg = EngineeringConfig::unitary_config(
                n,
                MultiportUnitary::new(modes, u).map_err(|e| protocol_err!(e))?,
            )
            .map_err(|e| protocol_err!(e))?;
            let channels: Vec<usize> = match d.channel {
                Some(k) => vec![k],
                None => (0..=n as usize).collect(),
            };
            let mut per_channel = Vec::new();
            for k in channels {
                let p = overlap_probe(&rho, &cfg, k).map_err(|e| protocol_err!(e))?;
                rows.push(CsvRow {
                    label: format!("channel-{k}"),
                    probability: p,
                    fidelity: None,
                    trials: None,
                });
                per_channel.push(json!({"channel": k, "joint_probability": p,
                    "conditional_probability": p * (n as f64 + 1.0)}));
            }
            json!({"overlaps": per_channel})
        }
        MeasureKind::Expectation => {
            let z =
                d.z.as_ref()
                    .ok_or_else(|| protocol_err!("expectation needs \"Z\""))?;
            let z = parse_matrix(z)?;
            let probe = Probe::new(&rho, probe_mode);
            let value = expectation(&z, &probe).map_err(|e| protocol_err!(e))?;
            rows.push(CsvRow {
                label: "expectation".into(),
                probability: value.norm(),
                fidelity: None,
                trials: d.shots,
            });
            json!({"expectation": [value.re, value.im]})
        }
        MeasureKind::Purify => {
            let settings = TuningSettings {
                seed: d.seed.unwrap_or(0),
                ..Default::default()
            };
            let out = qnd_purify(&rho, probe_mode, &settings).map_err(|e| protocol_err!(e))?;
            rows.push(CsvRow {
                label: "purified".into(),
                probability: out.fidelity_estimate,
                fidelity: Some(out.fidelity_estimate),
                trials: None,
            });
            json!({
                "fidelity_estimate": out.fidelity_estimate,
                "state": vector_json(&out.state),
                "eigenbasis": matrix_json(out.eigenbasis.matrix()),
            })
        }
    };
    Ok(RunOutput {
        results,
        rows,
        signal_csv: None,
    })
}

fn run_reconstruct(d: &ReconstructDescriptor) -> Result<RunOutput, RunError> {
    let rho_m = parse_matrix(&d.rho)?;
    let n = (rho_m.nrows() - 1) as u32;
    let rho = DensityOperator::new(FockSpace::source_space(n), rho_m.clone())
        .map_err(|e| protocol_err!(e))?;
    let probe_mode = match d.mode {
        Some(SamplingMode::Shots) => ProbeMode::Shots {
            shots: d.shots.unwrap_or(100_000),
            seed: d.seed.unwrap_or(0),
        },
        _ => ProbeMode::Analytic,
    };
    let settings = TuningSettings {
        direction: match d.direction {
            TuneDir::Max => TuneDirection::Maximize,
            TuneDir::Min => TuneDirection::Minimize,
        },
        seed: d.seed.unwrap_or(0),
        ..Default::default()
    };
    let result = diagonalize_experimentally(&rho, probe_mode.clone(), &settings)
        .map_err(|e| protocol_err!(e))?;
    let reconstructed = DensityOperator::new_unnormalized(
        FockSpace::source_space(n),
        result.reconstructed_matrix(),
    )
    .normalize()
    .0;
    let distance = trace_distance(&reconstructed, &rho).map_err(|e| protocol_err!(e))?;
    let mut rows = Vec::new();
    for (k, ev) in result.eigenvalues.iter().enumerate() {
        rows.push(CsvRow {
            label: format!("eigenvalue-{k}"),
            probability: *ev,
            fidelity: None,
            trials: None,
        });
    }
    let mut signal_csv = String::from("stage,cycle,signal\n");
    for (stage, cycle, signal) in &result.signal_trace {
        signal_csv.push_str(&format!("{stage},{cycle},{signal}\n"));
    }
    let fock = if d.fock_matrix {
        let probe = Probe::new(&rho, probe_mode);
        let rec = reconstruct_fock_matrix(&probe).map_err(|e| protocol_err!(e))?;
        Some(matrix_json(&rec))
    } else {
        None
    };
    let results = json!({
        "eigenvalues": result.eigenvalues,
        "U": matrix_json(result.unitary.matrix()),
        "trace_distance": distance,
        "signals_history": result.signal_trace.iter()
            .map(|(s, c, v)| json!([s, c, v])).collect::<Vec<_>>(),
        "fock_matrix": fock,
        "converged": result.converged,
    });
    Ok(RunOutput {
        results,
        rows,
        signal_csv: Some(signal_csv),
    })
}

fn run_telemanip(d: &TelemanipDescriptor, force_oracle: bool) -> Result<RunOutput, RunError> {
    let (cfg, decomposition) = engineering_config(&d.target, d.phi)?;
    let input = source_input(cfg.n(), &d.input, 0.0)?;
    let mut rows = Vec::new();
    let results = match d.mode {
        TelemanipMode::Conditional => {
            let (rec, transcript, _) =
                run_telemanip_conditional(&input, &cfg).map_err(|e| protocol_err!(e))?;
            let (probability, post, path) = if force_oracle {
                let o = oracle::two_converter(
                    &input,
                    &cfg,
                    &TwoConverterRun {
                        detected_phase: cfg.phi(),
                        reversed_ports: true,
                        ..Default::default()
                    },
                    1,
                )
                .map_err(|e| protocol_err!(e))?;
                (o.probability, Some(o.post_state), "oracle")
            } else {
                (rec.probability, rec.post_state.clone(), "fast")
            };
            let fid = match (&post, &rec.post_state) {
                (Some(a), Some(b)) => Some(state_fidelity(a, b).map_err(|e| protocol_err!(e))?),
                _ => None,
            };
            rows.push(CsvRow {
                label: label_string(&rec),
                probability,
                fidelity: fid,
                trials: None,
            });
            json!({
                "path": path,
                "probability": probability,
                "decomposition": decomposition,
                "state": post.map(|s| s.to_json()),
                "transcript": serde_json::to_value(&transcript).unwrap(),
            })
        }
        TelemanipMode::Unconditional => {
            let out = run_telemanip_unconditional(&input, &cfg).map_err(|e| protocol_err!(e))?;
            let branch_json: Vec<Value> = out
                .branches
                .iter()
                .map(|b| {
                    rows.push(CsvRow {
                        label: label_string(b),
                        probability: b.probability,
                        fidelity: None,
                        trials: None,
                    });
                    outcome_json(b, None)
                })
                .collect();
            json!({
                "aggregate_probability": out.aggregate.probability,
                "failure_probability": out.failure.probability,
                "decomposition": decomposition,
                "branches": branch_json,
                "state": out.aggregate.post_state.as_ref().map(|s| s.to_json()),
                "transcript": serde_json::to_value(&out.transcript).unwrap(),
            })
        }
        TelemanipMode::Reduced => {
            let rho = input.to_density();
            let (red3, red3p, red4, red4p) = if force_oracle {
                let (a, b) =
                    oracle::reduced_states_fig3(&input, &cfg, 1).map_err(|e| protocol_err!(e))?;
                let (c, dd) =
                    oracle::reduced_states_fig4(&input, &cfg, 1).map_err(|e| protocol_err!(e))?;
                (a, b, c, dd)
            } else {
                let (a, b) = reduced_states_fig3(&rho, &cfg).map_err(|e| protocol_err!(e))?;
                let (c, dd) = reduced_states_fig4(&rho, &cfg).map_err(|e| protocol_err!(e))?;
                (
                    a.matrix().clone(),
                    b.matrix().clone(),
                    c.matrix().clone(),
                    dd.matrix().clone(),
                )
            };
            let d_dim = cfg.n() as usize + 1;
            let white = linalg::identity(d_dim).mapv(|z| z / d_dim as f64);
            let noise_distance = linalg::max_diff(&red4p, &white);
            rows.push(CsvRow {
                label: "white-noise-deviation".into(),
                probability: noise_distance,
                fidelity: None,
                trials: None,
            });
            json!({
                "engineering_signal_marginal": matrix_json(&red3),
                "engineering_output_marginal": matrix_json(&red3p),
                "teleport_signal_marginal": matrix_json(&red4),
                "teleport_unconditioned_output": matrix_json(&red4p),
                "white_noise_deviation": noise_distance,
            })
        }
    };
    Ok(RunOutput {
        results,
        rows,
        signal_csv: None,
    })
}

fn run_identity_check(d: &IdentityCheckDescriptor) -> Result<RunOutput, RunError> {
    let seed = d.seed.unwrap_or(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    let results = match d.check {
        CheckKind::Appendix => {
            let mut worst = 0.0f64;
            for case in 0..d.cases {
                let cutoff = 1 + (case % 6) as u32;
                let mag: f64 = rand::Rng::random_range(&mut rng, 0.0..1.0);
                let arg: f64 =
                    rand::Rng::random_range(&mut rng, -std::f64::consts::PI..std::f64::consts::PI);
                let t = C64::from_polar(mag, arg);
                let r = C64::new((1.0 - mag * mag).sqrt(), 0.0);
                let pair =
                    FockSpace::build(vec![Mode::b(0), Mode::c(0)], vec![cutoff, cutoff], None)
                        .map_err(|e| protocol_err!(e))?;
                let bs =
                    kerrconv_core::optics::BeamSplitterElement::new((Mode::b(0), Mode::c(0)), t, r)
                        .map_err(|e| protocol_err!(e))?;
                let full = kerrconv_core::optics::element_matrix(
                    &kerrconv_core::optics::CircuitElement::BeamSplitter(bs),
                    &pair,
                )
                .map_err(|e| protocol_err!(e))?;
                let single = FockSpace::single_mode(Mode::b(0), cutoff);
                let analytic = kerrconv_core::optics::vacuum_projected_splitter(t, &single)
                    .map_err(|e| protocol_err!(e))?;
                for n_out in 0..=cutoff {
                    for n_in in 0..=cutoff {
                        let row = pair.index_of(&[n_out, 0]).unwrap();
                        let col = pair.index_of(&[n_in, 0]).unwrap();
                        let dev = (full[[row, col]]
                            - analytic[[
                                single.index_of(&[n_out]).unwrap(),
                                single.index_of(&[n_in]).unwrap(),
                            ]])
                        .norm();
                        worst = worst.max(dev);
                    }
                }
            }
            rows.push(CsvRow {
                label: "appendix-max-deviation".into(),
                probability: worst,
                fidelity: None,
                trials: Some(d.cases as u64),
            });
            json!({"check": "appendix", "cases": d.cases, "max_deviation": worst,
                   "pass": worst < 1e-12})
        }
        CheckKind::Device => {
            let cfg = ConverterConfig::canonical(d.n, 0.0);
            let space = FockSpace::source_space(d.n)
                .tensor(&FockSpace::target_space(d.n))
                .map_err(|e| protocol_err!(e))?;
            let dd = d.n as usize + 1;
            let a_pos = space.mode_position(&Mode::a()).unwrap();
            let mut worst = 0.0f64;
            for _ in 0..d.cases {
                // random state over the reachable (signal ⊗ one channel
                // photon) subspace
                let coeffs = linalg::random_state_vector(dd * dd, &mut rng);
                let mut amps = Array1::<C64>::zeros(space.dim());
                for k in 0..dd {
                    for l in 0..dd {
                        let mut occ = vec![0u32; space.modes().len()];
                        occ[a_pos] = k as u32;
                        occ[space.mode_position(&Mode::b(l)).unwrap()] = 1;
                        amps[space.index_of(&occ).unwrap()] = coeffs[k * dd + l];
                    }
                }
                let blockwise = kerrconv_core::converter::apply_m(&cfg, &space, &amps, false)
                    .map_err(|e| protocol_err!(e))?;
                let mut circuit =
                    kerrconv_core::oracle::OracleCircuit::new(space.clone(), amps.clone());
                circuit
                    .apply_device(&cfg, &Mode::a(), false)
                    .map_err(|e| protocol_err!(e))?;
                let dev: f64 = circuit
                    .state()
                    .iter()
                    .zip(blockwise.iter())
                    .map(|(a, b)| (a - b).norm())
                    .fold(0.0, f64::max);
                worst = worst.max(dev);
            }
            rows.push(CsvRow {
                label: "device-max-deviation".into(),
                probability: worst,
                fidelity: None,
                trials: Some(d.cases as u64),
            });
            json!({"check": "device", "N": d.n, "cases": d.cases, "max_deviation": worst,
                   "pass": worst < 1e-12})
        }
    };
    Ok(RunOutput {
        results,
        rows,
        signal_csv: None,
    })
}
