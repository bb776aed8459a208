// Converts the UCI Pendigits text files (pendigits.tra / pendigits.tes:
// 16 comma-separated coordinates forming 8 resampled (x, y) points, then the
// class label) into the canonical stroke format.

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include "sparsecnn/dataset.hpp"

int main(int argc, char** argv) {
    if (argc != 3) {
        std::fprintf(stderr, "usage: convert_uci_pendigits <pendigits.tra|tes> <out.schars>\n");
        return 2;
    }
    std::ifstream in(argv[1]);
    if (!in) {
        std::fprintf(stderr, "cannot open %s\n", argv[1]);
        return 1;
    }

    sparsecnn::Dataset ds;
    ds.kind = sparsecnn::DataKind::strokes;
    ds.num_classes = 10;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        for (auto& c : line)
            if (c == ',') c = ' ';
        std::istringstream ss(line);
        std::vector<double> values;
        double v;
        while (ss >> v) values.push_back(v);
        if (values.empty()) continue;
        if (values.size() != 17) {
            std::fprintf(stderr, "%s:%d: expected 17 values, got %zu\n", argv[1], line_no,
                         values.size());
            return 1;
        }
        sparsecnn::StrokeCharacter ch;
        ch.label = static_cast<int>(values[16]);
        std::vector<sparsecnn::Point> stroke;
        for (int p = 0; p < 8; ++p)
            stroke.push_back({values[static_cast<std::size_t>(2 * p)],
                              values[static_cast<std::size_t>(2 * p) + 1]});
        ch.strokes.push_back(std::move(stroke));
        ds.strokes.push_back(std::move(ch));
    }
    sparsecnn::save_strokes(argv[2], ds);
    std::printf("wrote %zu characters to %s\n", ds.strokes.size(), argv[2]);
    return 0;
}
