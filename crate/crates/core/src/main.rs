fn main() {
    std::process::exit(talkitout::cli::run(std::env::args_os()));
}
