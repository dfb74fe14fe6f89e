#include "otreg/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <vector>

namespace otreg {
namespace {

std::ifstream open_or_throw(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open file: " + path);
    return in;
}

std::ofstream create_or_throw(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write file: " + path);
    return out;
}

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

PointCloud read_ascii_ply(std::ifstream& in, const std::string& path) {
    std::string line;
    long vertex_count = -1;
    int prop_count = 0;
    int ix = -1, iy = -1, iz = -1;
    bool in_vertex_element = false;
    while (std::getline(in, line)) {
        std::istringstream ss(line);
        std::string tok;
        ss >> tok;
        if (tok == "format") {
            std::string fmt;
            ss >> fmt;
            if (fmt != "ascii") throw ConfigError("only ASCII PLY is supported: " + path);
        } else if (tok == "element") {
            std::string name;
            ss >> name;
            in_vertex_element = (name == "vertex");
            if (in_vertex_element) ss >> vertex_count;
        } else if (tok == "property" && in_vertex_element) {
            std::string type, name;
            ss >> type >> name;
            if (name == "x") ix = prop_count;
            if (name == "y") iy = prop_count;
            if (name == "z") iz = prop_count;
            ++prop_count;
        } else if (tok == "end_header") {
            break;
        }
    }
    if (vertex_count < 0 || ix < 0 || iy < 0 || iz < 0)
        throw ConfigError("PLY header lacks vertex x,y,z properties: " + path);

    PointCloud cloud;
    cloud.points.reserve(static_cast<std::size_t>(vertex_count));
    for (long i = 0; i < vertex_count; ++i) {
        if (!std::getline(in, line)) throw ConfigError("PLY truncated: " + path);
        std::istringstream ss(line);
        std::vector<double> vals(static_cast<std::size_t>(prop_count));
        for (int c = 0; c < prop_count; ++c) {
            if (!(ss >> vals[static_cast<std::size_t>(c)]))
                throw ConfigError("malformed PLY vertex line in " + path);
        }
        cloud.points.emplace_back(vals[static_cast<std::size_t>(ix)],
                                  vals[static_cast<std::size_t>(iy)],
                                  vals[static_cast<std::size_t>(iz)]);
    }
    return cloud;
}

}  // namespace

PointCloud read_point_cloud(const std::string& path) {
    std::ifstream in = open_or_throw(path);
    std::string first;
    std::getline(in, first);
    if (first.rfind("ply", 0) == 0) return read_ascii_ply(in, path);

    in.clear();
    in.seekg(0);
    PointCloud cloud;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::size_t start = line.find_first_not_of(" \t\r");
        if (start == std::string::npos || line[start] == '#') continue;
        std::istringstream ss(line);
        double x, y, z;
        if (!(ss >> x >> y >> z)) {
            throw ConfigError(path + ":" + std::to_string(lineno) + ": expected three decimals");
        }
        cloud.points.emplace_back(x, y, z);
    }
    cloud.validate();
    return cloud;
}

void write_point_cloud(const std::string& path, const PointCloud& cloud) {
    std::ofstream out = create_or_throw(path);
    for (const auto& p : cloud.points) {
        out << fmt_double(p.x()) << ' ' << fmt_double(p.y()) << ' ' << fmt_double(p.z()) << '\n';
    }
}

Eigen::MatrixXd read_matrix(const std::string& path) {
    std::ifstream in = open_or_throw(path);
    std::vector<std::vector<double>> rows;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::size_t start = line.find_first_not_of(" \t\r");
        if (start == std::string::npos || line[start] == '#') continue;
        std::istringstream ss(line);
        std::vector<double> row;
        double v;
        while (ss >> v) row.push_back(v);
        if (!rows.empty() && row.size() != rows.front().size()) {
            throw ConfigError(path + ":" + std::to_string(lineno) + ": inconsistent column count");
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw ConfigError("empty matrix file: " + path);
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()),
                      static_cast<Eigen::Index>(rows.front().size()));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            m(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    return m;
}

void write_matrix(const std::string& path, const Eigen::MatrixXd& m) {
    std::ofstream out = create_or_throw(path);
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            if (j > 0) out << ' ';
            out << fmt_double(m(i, j));
        }
        out << '\n';
    }
}

RigidTransform read_transform(const std::string& path) {
    Eigen::MatrixXd m = read_matrix(path);
    if (m.rows() != 4 || m.cols() != 4) throw ConfigError("transform file must be 4x4: " + path);
    RigidTransform tf;
    tf.rotation = m.topLeftCorner<3, 3>();
    tf.translation = m.topRightCorner<3, 1>();
    if (!tf.is_valid(1e-6)) throw ConfigError("transform file rotation is not SO(3): " + path);
    return tf;
}

void write_transform(const std::string& path, const RigidTransform& tf) {
    Eigen::MatrixXd m = Eigen::MatrixXd::Identity(4, 4);
    m.topLeftCorner<3, 3>() = tf.rotation;
    m.topRightCorner<3, 1>() = tf.translation;
    write_matrix(path, m);
}

CorrespondenceSet read_correspondences(const std::string& path) {
    std::ifstream in = open_or_throw(path);
    CorrespondenceSet pairs;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        Correspondence c;
        if (!(ss >> c.src >> c.tgt >> c.confidence))
            throw ConfigError("malformed correspondence line in " + path);
        pairs.push_back(c);
    }
    return pairs;
}

void write_correspondences(const std::string& path, const CorrespondenceSet& pairs) {
    std::ofstream out = create_or_throw(path);
    for (const auto& c : pairs) {
        out << c.src << '\t' << c.tgt << '\t' << fmt_double(c.confidence) << '\n';
    }
}

}  // namespace otreg
