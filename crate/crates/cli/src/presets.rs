//! Built-in experiment presets.

use anyhow::{bail, Result};

use sigsel_core::baselines::Summary;
use sigsel_core::params::{Block, ParameterSpace};
use sigsel_core::wf::SelectionMode;

use crate::config::{
    BenchmarkConfig, ExperimentConfig, InferenceConfig, IoConfig, KernelSection, Method,
    ModelConfig, ScenarioSpec, SimSection,
};

pub const NAMES: &[&str] = &[
    "fig2-two-locus",
    "table1",
    "three-locus",
    "nfds-one-locus",
    "nfds-two-locus",
    "yeast-K",
    "yeast-S",
    "drosophila-joint",
    "joint-two-locus",
];

/// Master seed of every preset.
pub const SEED: u64 = 1;

fn selection_space(loci: usize) -> ParameterSpace {
    ParameterSpace::new(vec![Block::uniform("s", -1.0, 1.0, loci)]).expect("valid space")
}

fn joint_space(loci: usize, alpha: f64) -> ParameterSpace {
    ParameterSpace::new(vec![
        Block::uniform("s", -1.0, 1.0, loci),
        Block::dirichlet("h", 1 << loci, alpha),
    ])
    .expect("valid space")
}

fn inference(c: f64, n_steps: usize, burn_in: usize, gamma: f64) -> InferenceConfig {
    InferenceConfig {
        w: 1.0,
        m: 8,
        c,
        n_steps,
        burn_in,
        kernel: KernelSection {
            gamma,
            dyadic_order: 2,
            add_time: true,
        },
        summary: Summary::Mean,
        infer_init_haps: false,
        init_s: None,
        init_haps: None,
    }
}

/// Two loci, N = 5000, 100 generations observed every 10.
fn two_locus(s: [f64; 2], r: f64, init_haps: [f64; 4]) -> (ModelConfig, SimSection) {
    (
        ModelConfig {
            loci: 2,
            mode: SelectionMode::Standard,
            dominance: vec![0.5, 0.5],
            recombination: vec![r],
        },
        SimSection {
            pop_size: 5000,
            t0: 0,
            intervals: 10,
            delta_t: 10,
            init_haps: init_haps.to_vec(),
            true_s: s.to_vec(),
            replicates: 1,
        },
    )
}

fn config(
    name: &str,
    description: &str,
    (model, sim): (ModelConfig, SimSection),
    inference: InferenceConfig,
    parameter_space: ParameterSpace,
) -> ExperimentConfig {
    ExperimentConfig {
        preset: Some(name.into()),
        description: description.into(),
        seed: SEED,
        model,
        sim,
        inference,
        parameter_space,
        io: IoConfig::default(),
        benchmark: None,
    }
}

fn yeast(name: &str, start: [f64; 3]) -> ExperimentConfig {
    let model = ModelConfig {
        loci: 3,
        mode: SelectionMode::Standard,
        dominance: vec![0.5; 3],
        recombination: vec![5e-4, 5e-4],
    };
    // 12 cycles of 17.5 generations, sampled at the start, middle and end
    let sim = SimSection {
        pop_size: 2000,
        t0: 0,
        intervals: 2,
        delta_t: 105,
        init_haps: vec![0.125; 8],
        true_s: start.to_vec(),
        replicates: 1,
    };
    let mut inf = inference(1e-4, 1000, 300, 0.1);
    inf.w = 5.0;
    inf.init_s = Some(start.to_vec());
    config(
        name,
        "Three-locus yeast cross, 8 founder haplotypes, 210 generations at N = 2000. \
         Generation count and population size are illustrative guesses; results are \
         sensitive to both.",
        (model, sim),
        inf,
        selection_space(3),
    )
}

/// Expands a preset by name.
pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let cfg = match name {
        "fig2-two-locus" => config(
            name,
            "Two-locus standard selection, s = (0.02, 0.07), known initial haplotypes.",
            two_locus([0.02, 0.07], 1e-6, [0.1, 0.2, 0.3, 0.4]),
            inference(1e-4, 1000, 200, 0.1),
            selection_space(2),
        ),
        "table1" => {
            let mut cfg = config(
                name,
                "RMSE benchmark over recombination rates and selection strengths, 10 repetitions each.",
                two_locus([0.02, 0.02], 0.0, [0.1, 0.2, 0.3, 0.4]),
                inference(1e-4, 1000, 200, 0.1),
                selection_space(2),
            );
            cfg.inference.summary = Summary::Mode;
            let mut scenarios = Vec::new();
            for r in [0.0, 1e-6, 1e-2, 0.1, 0.5] {
                for s2 in [0.02, 0.05, 0.07, 0.09] {
                    scenarios.push(ScenarioSpec {
                        name: format!("r={r} s=(0.02,{s2})"),
                        s_true: vec![0.02, s2],
                        recombination: vec![r],
                    });
                }
            }
            cfg.benchmark = Some(BenchmarkConfig {
                scenarios,
                methods: vec![Method::Gblfi, Method::Lls],
                n_reps: 10,
                external: Vec::new(),
            });
            cfg
        }
        "three-locus" => {
            let model = ModelConfig {
                loci: 3,
                mode: SelectionMode::Standard,
                dominance: vec![0.5; 3],
                recombination: vec![0.001, 0.01],
            };
            let sim = SimSection {
                pop_size: 5000,
                t0: 0,
                intervals: 10,
                delta_t: 10,
                init_haps: vec![0.0278, 0.0556, 0.0833, 0.1111, 0.1389, 0.1667, 0.1944, 0.2222],
                true_s: vec![0.02, 0.03, 0.05],
                replicates: 1,
            };
            config(
                name,
                "Three linked selected loci, low recombination.",
                (model, sim),
                inference(1e-4, 1000, 300, 0.1),
                selection_space(3),
            )
        }
        "nfds-one-locus" => {
            let model = ModelConfig {
                loci: 1,
                mode: SelectionMode::Nfds,
                dominance: vec![0.5],
                recombination: vec![],
            };
            let sim = SimSection {
                pop_size: 5000,
                t0: 0,
                intervals: 10,
                delta_t: 10,
                init_haps: vec![0.5, 0.5],
                true_s: vec![0.07],
                replicates: 1,
            };
            config(
                name,
                "Single locus under frequency-dependent selection.",
                (model, sim),
                inference(1e-2, 2000, 500, 0.01),
                selection_space(1),
            )
        }
        "nfds-two-locus" => {
            let (mut model, sim) = two_locus([0.02, 0.07], 0.01, [0.1, 0.2, 0.3, 0.4]);
            model.mode = SelectionMode::Nfds;
            config(
                name,
                "Two loci under frequency-dependent selection, r = 0.01.",
                (model, sim),
                inference(1e-3, 2000, 500, 0.01),
                selection_space(2),
            )
        }
        "yeast-K" => yeast(name, [-0.05, 0.024, -0.027]),
        "yeast-S" => yeast(name, [-0.0115, 0.0, -0.0011]),
        "drosophila-joint" => {
            let model = ModelConfig {
                loci: 3,
                mode: SelectionMode::Standard,
                dominance: vec![0.5; 3],
                recombination: vec![1.4e-3, 2.6e-4],
            };
            // simulation defaults reproduce a posterior fit to the field data
            let sim = SimSection {
                pop_size: 300,
                t0: 0,
                intervals: 6,
                delta_t: 10,
                init_haps: vec![0.036, 0.00003, 0.189, 0.034, 0.042, 0.066, 0.025, 0.60797],
                true_s: vec![-0.047, -0.051, 0.027],
                replicates: 10,
            };
            let mut inf = inference(5e-3, 100_000, 10_000, 0.1);
            inf.infer_init_haps = true;
            config(
                name,
                "Ten replicate populations, three loci; selection and initial haplotype \
                 frequencies inferred jointly.",
                (model, sim),
                inf,
                joint_space(3, 0.25),
            )
        }
        "joint-two-locus" => {
            // pilot-tuned; 1e-3 accepts under 10% of proposals here
            let mut inf = inference(1e-4, 100_000, 10_000, 0.1);
            inf.infer_init_haps = true;
            config(
                name,
                "Two loci; selection and initial haplotype frequencies inferred jointly.",
                two_locus([0.02, 0.07], 1e-6, [0.4, 0.1, 0.1, 0.4]),
                inf,
                joint_space(2, 0.25),
            )
        }
        other => bail!("unknown preset {other:?}; known presets: {}", NAMES.join(", ")),
    };
    Ok(cfg)
}
