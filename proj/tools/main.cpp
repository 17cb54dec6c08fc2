#include <iostream>

int main() {
  std::cout << "nilmformer\n";
  return 0;
}
