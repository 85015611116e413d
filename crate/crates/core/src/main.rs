//! Command-line surface for the perturbation toolkit.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use privembed::attack::{average_precision, node_classification_f1, similarity_attack};
use privembed::error::Error;
use privembed::graph::load_edge_list;
use privembed::netmf::{build_target, factorize_target, write_embedding_text, EmbeddingParams};
use privembed::pipeline::{
    exit_code, parse_embedding_text, parse_labels, parse_pairs, run_pipeline, Config,
};
use privembed::synth::{planted_partition, synth_er_graph};
use privembed::utility::procrustes_distance;

#[derive(Parser)]
#[command(name = "privembed", about = "Privacy-preserving network embedding")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct EmbedOpts {
    /// deepwalk or line
    #[arg(long, default_value = "deepwalk")]
    embedding: String,
    /// Walk window T (deepwalk only)
    #[arg(long, default_value_t = 10)]
    window: usize,
    /// Negative-sampling parameter b
    #[arg(long, default_value_t = 1.0)]
    negatives: f64,
    /// Embedding dimension K
    #[arg(long, default_value_t = 128)]
    dim: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl EmbedOpts {
    fn params(&self) -> Result<EmbeddingParams, Error> {
        match self.embedding.as_str() {
            "line" => Ok(EmbeddingParams::line(self.negatives, self.dim)),
            "deepwalk" => Ok(EmbeddingParams::deepwalk(
                self.window,
                self.negatives,
                self.dim,
            )),
            other => Err(Error::InvalidConfigValue {
                key: "embedding".into(),
                value: other.into(),
            }),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Embed a graph and write the word2vec-style text file.
    Embed {
        #[arg(long)]
        edges: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        embed: EmbedOpts,
    },
    /// Run the perturbation optimizer and write plan + artifacts.
    Perturb {
        #[arg(long)]
        edges: PathBuf,
        /// ppne-fast or ppne-exact
        #[arg(long, default_value = "ppne-fast")]
        method: String,
        #[arg(long, default_value_t = 10)]
        iterations: usize,
        #[arg(long, default_value_t = 10_000)]
        sample_size: usize,
        #[arg(long, default_value_t = 1)]
        batch_size: usize,
        #[arg(long, default_value_t = 1.0)]
        k_exponent: f64,
        /// Fraction of links hidden as private when no pairs file is given
        #[arg(long, default_value_t = 0.1)]
        ppos_fraction: f64,
        #[arg(long)]
        pairs: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        embed: EmbedOpts,
    },
    /// Score private pairs with the similarity attack and report AP.
    Attack {
        #[arg(long)]
        embedding: PathBuf,
        #[arg(long)]
        pairs: PathBuf,
    },
    /// Evaluate an embedding: classification F1 and distance to a reference.
    Evaluate {
        #[arg(long)]
        embedding: PathBuf,
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Reference embedding for the alignment distance
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run a baseline perturbation strategy.
    Baseline {
        #[arg(long)]
        edges: PathBuf,
        /// random, degree, betweenness, or dice
        #[arg(long)]
        method: String,
        #[arg(long)]
        budget: usize,
        #[arg(long, default_value_t = 0.1)]
        ppos_fraction: f64,
        #[arg(long)]
        pairs: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        embed: EmbedOpts,
    },
    /// Full pipeline from a key=value config file.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
        /// Override config keys, e.g. --set seed=7 (repeatable)
        #[arg(long = "set")]
        sets: Vec<String>,
    },
    /// Generate a synthetic graph (Erdos-Renyi, or planted partition with
    /// --clusters) as an edge list.
    Synth {
        #[arg(long)]
        nodes: usize,
        #[arg(long, default_value_t = 10.0)]
        avg_degree: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        clusters: Option<usize>,
        #[arg(long, default_value_t = 0.1)]
        p_in: f64,
        #[arg(long, default_value_t = 0.01)]
        p_out: f64,
        /// Where to write ground-truth labels (planted partition only)
        #[arg(long)]
        labels_out: Option<PathBuf>,
    },
}

fn read(path: &PathBuf) -> Result<String, Error> {
    std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

fn write(path: &PathBuf, content: &str) -> Result<(), Error> {
    std::fs::write(path, content).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Embed { edges, out, embed } => {
            let (graph, tokens) = load_edge_list(&read(&edges)?)?;
            let params = embed.params()?;
            let target = build_target::<f64>(&graph, &params, 5_000, 1e-9)?;
            let emb = factorize_target(&target, params.dimension(), 0, 1e-8, embed.seed)?;
            write(&out, &write_embedding_text(&emb.x, &tokens))?;
            println!("embedded {} nodes into {}", graph.node_count(), out.display());
        }
        Command::Perturb {
            edges,
            method,
            iterations,
            sample_size,
            batch_size,
            k_exponent,
            ppos_fraction,
            pairs,
            out_dir,
            embed,
        } => {
            let mut cfg = Config::default();
            cfg.set("method", &method)?;
            cfg.set("embedding", &embed.embedding)?;
            cfg.window = embed.window;
            cfg.negatives = embed.negatives;
            cfg.dim = embed.dim;
            cfg.seed = embed.seed;
            cfg.iterations = iterations;
            cfg.sample_size = sample_size;
            cfg.batch_size = batch_size;
            cfg.k_exponent = k_exponent;
            cfg.ppos_fraction = ppos_fraction;
            cfg.edges_path = Some(edges.display().to_string());
            cfg.pairs_path = pairs.map(|p| p.display().to_string());
            cfg.out_dir = Some(out_dir.display().to_string());
            let out = run_pipeline(&cfg)?;
            println!(
                "applied {} flips; artifacts in {}",
                out.plan.entries.len(),
                out.out_dir.display()
            );
        }
        Command::Attack { embedding, pairs } => {
            let (x, tokens) = parse_embedding_text(&read(&embedding)?)?;
            let pairset = parse_pairs(&read(&pairs)?, &tokens)?;
            let mut eval_pairs = pairset.p_pos().to_vec();
            let mut labels = vec![1u8; eval_pairs.len()];
            eval_pairs.extend(pairset.p_neg().iter().copied());
            labels.resize(eval_pairs.len(), 0);
            let scores = similarity_attack(&x, &eval_pairs)?;
            for (p, s) in eval_pairs.iter().zip(&scores) {
                println!("{} {} {:.6}", tokens[p.i()], tokens[p.j()], s);
            }
            let ap = average_precision(&scores, &labels)?;
            println!("ap {ap:.6}");
            println!("one_minus_ap {:.6}", 1.0 - ap);
        }
        Command::Evaluate {
            embedding,
            labels,
            reference,
            seed,
        } => {
            let (x, tokens) = parse_embedding_text(&read(&embedding)?)?;
            if let Some(path) = labels {
                let labels = parse_labels(&read(&path)?, &tokens)?;
                let f1 = node_classification_f1(&x, &labels, 0.7, seed)?;
                println!("macro_f1 {f1:.6}");
            }
            if let Some(path) = reference {
                let (x_ref, _) = parse_embedding_text(&read(&path)?)?;
                let d = procrustes_distance(&x, &x_ref)?;
                println!("alignment_distance {d:.6}");
            }
        }
        Command::Baseline {
            edges,
            method,
            budget,
            ppos_fraction,
            pairs,
            out_dir,
            embed,
        } => {
            let mut cfg = Config::default();
            cfg.set("method", &method)?;
            cfg.set("embedding", &embed.embedding)?;
            cfg.window = embed.window;
            cfg.negatives = embed.negatives;
            cfg.dim = embed.dim;
            cfg.seed = embed.seed;
            cfg.iterations = budget;
            cfg.ppos_fraction = ppos_fraction;
            cfg.edges_path = Some(edges.display().to_string());
            cfg.pairs_path = pairs.map(|p| p.display().to_string());
            cfg.out_dir = Some(out_dir.display().to_string());
            let out = run_pipeline(&cfg)?;
            println!(
                "applied {} flips; artifacts in {}",
                out.plan.entries.len(),
                out.out_dir.display()
            );
        }
        Command::Pipeline { config, sets } => {
            let mut cfg = Config::parse(&read(&config)?)?;
            for assignment in &sets {
                let (key, value) =
                    assignment
                        .split_once('=')
                        .ok_or_else(|| Error::InvalidConfigKey {
                            key: assignment.clone(),
                        })?;
                cfg.set(key.trim(), value.trim())?;
            }
            let out = run_pipeline(&cfg)?;
            println!(
                "{} records, {} flips; artifacts in {}",
                out.records.len(),
                out.plan.entries.len(),
                out.out_dir.display()
            );
        }
        Command::Synth {
            nodes,
            avg_degree,
            seed,
            out,
            clusters,
            p_in,
            p_out,
            labels_out,
        } => {
            let (graph, labels) = match clusters {
                Some(c) => {
                    let (g, l) = planted_partition(nodes, c, p_in, p_out, seed)?;
                    (g, Some(l))
                }
                None => (synth_er_graph(nodes, avg_degree, seed)?, None),
            };
            let mut text = String::new();
            for e in graph.edges() {
                text.push_str(&format!("n{} n{}\n", e.i(), e.j()));
            }
            write(&out, &text)?;
            if let Some(path) = labels_out {
                match &labels {
                    Some(l) => {
                        let text: String = l
                            .iter()
                            .enumerate()
                            .map(|(i, c)| format!("n{i}\tc{c}\n"))
                            .collect();
                        write(&path, &text)?;
                    }
                    None => {
                        return Err(Error::InvalidConfigValue {
                            key: "labels_out".into(),
                            value: "labels require --clusters".into(),
                        })
                    }
                }
            }
            println!(
                "wrote {} edges over {} nodes to {}",
                graph.edge_count(),
                graph.node_count(),
                out.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err) as u8)
        }
    }
}
