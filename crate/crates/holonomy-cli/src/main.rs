fn main() {
    println!("holonomy-cli placeholder");
}
