fn main() {
    if let Err(err) = moran_dim::cli::run() {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}
