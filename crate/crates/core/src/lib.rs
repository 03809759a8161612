pub mod dynamics;
pub mod gaussian_tv;
pub mod density;
pub mod sde_sim;
pub mod experiments;

/// Runs `f` on a dedicated pool of `workers` threads, or on the global pool
/// when `None`. Results never depend on the worker count.
pub fn with_workers<R: Send>(workers: Option<usize>, f: impl FnOnce() -> R + Send) -> R {
    match workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build()
            .expect("thread pool")
            .install(f),
        None => f(),
    }
}
