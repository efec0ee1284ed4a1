//! The `generate` subcommand: draw a seeded instance and write it as JSON.

use std::path::PathBuf;

use clap::{Args, ValueEnum};

use pbdd::graph::Graph;
use pbdd::problem::generate::{
    generate_num, generate_random_qp, generate_resource_allocation, random_wls, NumParams,
    QpParams,
};
use pbdd::problem::Utility;
use pbdd::rng;
use pbdd::{Error, PartitionedProblem};

use crate::files::resolve_out;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Scenario {
    /// Random quadratic objectives with half-space and box constraints.
    Qp,
    /// The five-source, three-link rate allocation network.
    Num,
    /// Concave utilities under per-node capacity caps.
    Resalloc,
    /// Distributed weighted least squares.
    Wls,
}

#[derive(Args)]
pub struct GenerateArgs {
    /// Instance family to draw from.
    #[arg(long, value_enum)]
    pub scenario: Scenario,
    /// Node count (graph-based scenarios; default 6).
    #[arg(long)]
    pub n: Option<usize>,
    /// Edge probability (graph-based scenarios; default 0.5).
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Capacity as a fraction of the users' combined target rates (num; default 0.7).
    #[arg(long)]
    pub capacity_scale: Option<f64>,
    /// Regularization weight (resalloc default 0.1, wls default 0.3).
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Half-width of the box around the origin (wls; default 1000).
    #[arg(long)]
    pub box_radius: Option<f64>,
    /// Output path; relative paths land in $PBDD_OUT_DIR when it is set.
    #[arg(short, long)]
    pub output: PathBuf,
}

fn inapplicable(given: bool, flag: &str, scenario: &str) -> Result<(), Error> {
    if given {
        Err(Error::InvalidParameter(format!(
            "--{flag} does not apply to scenario {scenario}"
        )))
    } else {
        Ok(())
    }
}

pub fn build(args: &GenerateArgs) -> Result<PartitionedProblem, Error> {
    let n = args.n.unwrap_or(6);
    let p = args.p.unwrap_or(0.5);
    match args.scenario {
        Scenario::Qp => {
            inapplicable(args.capacity_scale.is_some(), "capacity-scale", "qp")?;
            inapplicable(args.epsilon.is_some(), "epsilon", "qp")?;
            inapplicable(args.box_radius.is_some(), "box-radius", "qp")?;
            let graph = Graph::erdos_renyi(n, p, args.seed)?;
            generate_random_qp(graph, args.seed, &QpParams::default())
        }
        Scenario::Num => {
            inapplicable(args.n.is_some(), "n", "num")?;
            inapplicable(args.p.is_some(), "p", "num")?;
            inapplicable(args.epsilon.is_some(), "epsilon", "num")?;
            inapplicable(args.box_radius.is_some(), "box-radius", "num")?;
            let scale = args.capacity_scale.unwrap_or(0.7);
            generate_num(&NumParams::five_source_demo(scale, args.seed), args.seed)
        }
        Scenario::Resalloc => {
            inapplicable(args.capacity_scale.is_some(), "capacity-scale", "resalloc")?;
            inapplicable(args.box_radius.is_some(), "box-radius", "resalloc")?;
            let graph = Graph::erdos_renyi(n, p, args.seed)?;
            let mut draws = rng::stream(args.seed, 100);
            let capacities: Vec<f64> =
                (0..n).map(|_| rng::uniform(&mut draws, 2.0, 5.0)).collect();
            let utilities: Vec<Utility> = (0..n)
                .map(|i| {
                    if i % 2 == 0 {
                        Utility::Log { weight: rng::uniform(&mut draws, 0.5, 2.0) }
                    } else {
                        Utility::Quadratic {
                            weight: rng::uniform(&mut draws, 0.5, 1.5),
                            target: rng::uniform(&mut draws, 1.0, 4.0),
                        }
                    }
                })
                .collect();
            let epsilon = args.epsilon.unwrap_or(0.1);
            generate_resource_allocation(graph, &capacities, &utilities, epsilon, args.seed)
        }
        Scenario::Wls => {
            inapplicable(args.capacity_scale.is_some(), "capacity-scale", "wls")?;
            let graph = Graph::erdos_renyi(n, p, args.seed)?;
            let epsilon = args.epsilon.unwrap_or(0.3);
            let radius = args.box_radius.unwrap_or(1e3);
            random_wls(graph, args.seed, epsilon, radius)
        }
    }
}

pub fn generate(args: &GenerateArgs) -> Result<(), Error> {
    let problem = build(args)?;
    let out = resolve_out(&args.output);
    std::fs::write(&out, problem.to_json() + "\n")?;
    eprintln!(
        "wrote {} instance (n = {}, dimension {}) to {}",
        problem.scenario(),
        problem.n(),
        problem.layout().total(),
        out.display()
    );
    Ok(())
}
