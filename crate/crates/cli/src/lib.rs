//! Config-driven workflows on top of `spatinla-core`: point-pattern fits
//! with SPDE fields, areal BYM disease mapping, synthetic data and the
//! files they produce.

pub mod bym;
pub mod config;
pub mod ingest;
pub mod lgcp;
pub mod output;
pub mod synth;

use std::fmt::Write;

use anyhow::Result;
use spatinla_core::oracle::{dense_posterior, loo_refit, nested_gaussian_posterior, toys};

/// Brute-force reference values for every bundled toy model, one
/// `key = value` line each, for regenerating frozen test constants.
pub fn oracle_report() -> Result<String> {
    let mut out = String::new();
    for toy in toys::all() {
        let post = match (&toy.dense, &toy.nested) {
            (Some(spec), _) => dense_posterior(&toy.model, spec)?,
            (None, Some(spec)) => nested_gaussian_posterior(&toy.model, spec)?,
            (None, None) => continue,
        };
        for (i, (m, s)) in post.latent_mean.iter().zip(&post.latent_sd).enumerate() {
            writeln!(out, "{}.latent{i}.mean = {m}", toy.name)?;
            writeln!(out, "{}.latent{i}.sd = {s}", toy.name)?;
        }
        for j in 0..toy.model.n_hyper() {
            writeln!(out, "{}.hyper{j}.mode = {}", toy.name, post.marginals[j].mode())?;
        }
        writeln!(out, "{}.log_evidence = {}", toy.name, post.log_evidence)?;
        if let (Some(spec), true) = (&toy.dense, toy.model.rows.len() <= 6) {
            for (i, c) in loo_refit(&toy.model, spec)?.iter().enumerate() {
                writeln!(out, "{}.cpo{i} = {c}", toy.name)?;
            }
        }
    }
    Ok(out)
}
