fn main() {
    std::process::exit(migrate_sim::run(std::env::args_os()));
}
