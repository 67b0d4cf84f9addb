use sparse_actions::cli::{main_with_args, THREADS_ENV};

fn main() {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => {
                eprintln!("error: {THREADS_ENV} must be a positive integer, got '{v}'");
                std::process::exit(2);
            }
        }
    }
    std::process::exit(main_with_args(std::env::args_os()));
}
