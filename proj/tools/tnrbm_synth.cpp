// Generates the deterministic synthetic digit corpus as IDX files, in the
// same layout as the classic handwritten-digit datasets (an image stack and
// a label vector), for demos and offline experiments.

#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "tnrbm/data_io.hpp"
#include "tnrbm/synthetic.hpp"

int main(int argc, char** argv) {
    CLI::App app{"synthetic digit corpus generator (IDX output)"};
    std::size_t count = 200;
    std::uint64_t seed = 0;
    std::string images_out, labels_out;
    app.add_option("--count", count, "number of images")->capture_default_str();
    app.add_option("--seed", seed, "master seed")->capture_default_str();
    app.add_option("--images-out", images_out, "output IDX image stack")->required();
    app.add_option("--labels-out", labels_out, "output IDX label vector")->required();
    CLI11_PARSE(app, argc, argv);

    try {
        const tnrbm::DenseTensor stack = tnrbm::synthetic_digit_stack(count, seed);
        tnrbm::DenseTensor labels(tnrbm::Dims{count});
        for (std::size_t i = 0; i < count; ++i)
            labels.values()[i] = static_cast<double>(tnrbm::synthetic_digit_label(i));
        tnrbm::save_idx(images_out, stack);
        tnrbm::save_idx(labels_out, labels);
        std::cout << "wrote " << count << " images to " << images_out << " and labels to "
                  << labels_out << "\n";
    } catch (const tnrbm::IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const tnrbm::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
